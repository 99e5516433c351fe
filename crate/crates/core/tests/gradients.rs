use apa_core::activation::{aglu_grad_lambda, apa_forward, ActivationParams};
use apa_core::gradcheck::{activation_probe_suite, draw_probes, relative_error, DerivativeOp};
use proptest::prelude::*;

#[test]
fn thousand_probes_agree_for_several_seeds() {
    for seed in [0, 1, 42] {
        let r = activation_probe_suite(1000, seed, 1e-6).unwrap();
        assert!(r.passed(), "seed {seed}: {r:#?}");
        assert_eq!(r.non_finite(), 0);
        for c in &r.checks {
            assert_eq!(c.skipped, 0, "{}", c.name);
        }
    }
}

#[test]
fn probes_cover_the_requested_box() {
    let pts = draw_probes(5000, 9);
    assert!(pts.iter().all(|&(z, k, l)| (-10.0..=10.0).contains(&z)
        && (-3.0..=3.0).contains(&k)
        && (1e-3..=1e3).contains(&l)));
    let below_one = pts.iter().filter(|p| p.2 < 1.0).count() as f64 / 5000.0;
    assert!((below_one - 0.5).abs() < 0.03, "λ should be log-uniform, got {below_one}");
}

/// The λ-derivative without the `ln(λe^{−κz}+1)/λ²` term.
fn truncated_aglu_lambda(z: f64, k: f64, l: f64) -> f64 {
    let p = ActivationParams::new(k, l).unwrap();
    -(z / l) * apa_forward(z, &p).unwrap() / (l + (k * z).exp())
}

#[test]
fn oracle_rejects_truncated_lambda_derivative() {
    let (z, k, l) = (0.9, -0.5, 0.3);
    let n = DerivativeOp::AgluLambda.numeric(z, k, l).unwrap();
    assert!((n.value - 0.181_54).abs() < 1e-5);
    let p = ActivationParams::new(k, l).unwrap();
    assert!(relative_error(aglu_grad_lambda(z, &p).unwrap(), n) < 1e-9);
    assert!(relative_error(truncated_aglu_lambda(z, k, l), n) > 1.0);

    let rejected = draw_probes(200, 5)
        .into_iter()
        .filter(|&(z, k, l)| {
            let n = DerivativeOp::AgluLambda.numeric(z, k, l).unwrap();
            relative_error(truncated_aglu_lambda(z, k, l), n) > 1e-6
        })
        .count();
    assert!(rejected > 150, "only {rejected}/200 probes flagged");
}

#[test]
fn oracle_flags_small_perturbations() {
    for op in DerivativeOp::ALL {
        let flagged = draw_probes(200, 11)
            .into_iter()
            .filter(|&(z, k, l)| {
                let p = ActivationParams::new(k, l).unwrap();
                let a = op.analytic(z, &p).unwrap();
                let n = op.numeric(z, k, l).unwrap();
                relative_error(a * (1.0 + 1e-4), n) > 1e-6
            })
            .count();
        assert!(flagged > 100, "{}: {flagged}/200", op.name());
    }
}

proptest! {
    #[test]
    fn analytic_matches_oracle(z in -10.0f64..10.0, k in -3.0f64..3.0, log_l in -6.9f64..6.9) {
        let l = log_l.exp();
        let p = ActivationParams::new(k, l).unwrap();
        for op in DerivativeOp::ALL {
            let a = op.analytic(z, &p).unwrap();
            prop_assert!(a.is_finite());
            let n = op.numeric(z, k, l).unwrap();
            prop_assert!(relative_error(a, n) < 1e-6, "{} at ({z}, {k}, {l})", op.name());
        }
    }
}
