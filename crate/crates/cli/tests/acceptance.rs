//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any hard criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use apa_core::activation::{aglu_eval, apa_eval, apa_forward, limits_check, ActivationParams};
use apa_core::datagen::{sample_theoretical, seeded_rng};
use apa_core::experiment::{compare_gates, GateComparison, ToyConfig};
use apa_core::gradcheck::{activation_probe_suite, model_gradient_check};
use apa_core::nn::{AttentionSpec, GateKind, HiddenActivation, InitConfig, LossKind, ModelSpec, Network};
use apa_core::stats::{
    attention_entropy, covariances, logit_alignment_report, nc1, ClassLogitTable, CovariancePair, Family, LogBase,
};
use apa_core::Tensor;
use rand::Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    /// Passed its hard part; a soft part did not hold.
    Warn(String),
}

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    if t <= budget {
        Ok(())
    } else {
        Err(format!("took {t:.2?}, budget {budget:?}"))
    }
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let probes = activation_probe_suite(1000, 2024, 1e-5).unwrap();
    let specs = [
        ModelSpec {
            hidden: vec![4],
            hidden_activation: HiddenActivation::Aglu,
            attention: Some(AttentionSpec {
                reduction: 2,
                gate: GateKind::Apa,
                dropout: 0.25,
                layer_norm: true,
            }),
        },
        ModelSpec {
            hidden: vec![6, 4],
            hidden_activation: HiddenActivation::Silu,
            attention: Some(AttentionSpec {
                reduction: 2,
                gate: GateKind::Sigmoid,
                dropout: 0.0,
                layer_norm: false,
            }),
        },
    ];
    let mut worst: f64 = 0.0;
    let mut largest = 0;
    for (i, spec) in specs.iter().enumerate() {
        let net = Network::<f64>::build(spec, 3, 3, &InitConfig::default(), i as u64).unwrap();
        largest = largest.max(net.params().scalar_count());
        let mut rng = seeded_rng(i as u64 + 100);
        let x = Tensor::from_vec(8, 3, (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let y: Vec<usize> = (0..8).map(|k| k % 3).collect();
        for loss in [LossKind::SoftmaxCe, LossKind::SigmoidBce] {
            for mask in [None, Some(7)] {
                worst = worst.max(model_gradient_check(&net, &x, &y, loss, mask).unwrap().max_rel_error);
            }
        }
    }
    let timing = within(Duration::from_secs(10), start);
    verdict(
        probes.passed() && worst <= 1e-4 && largest <= 200 && timing.is_ok(),
        format!(
            "activation max rel err {:.2e} over 1000 probes x 6 derivatives; model max rel err {worst:.2e} (<= {largest} params) {}",
            probes.max_rel_error(),
            timing.err().unwrap_or_default()
        ),
    )
}

fn unification() -> Verdict {
    let start = Instant::now();
    let r = limits_check::<f64>(1e-5);
    let exact_ok = r.checks.iter().filter(|c| c.identity.is_exact()).all(|c| c.max_deviation == 0.0);
    let timing = within(Duration::from_secs(1), start);
    let worst = r.checks.iter().map(|c| c.max_deviation).fold(0.0, f64::max);
    verdict(
        r.all_passed() && r.checks.len() == 7 && exact_ok && timing.is_ok(),
        format!(
            "{} identities, exact ones bit-equal, worst limit deviation {worst:.2e} {}",
            r.checks.len(),
            timing.err().unwrap_or_default()
        ),
    )
}

fn stability() -> Verdict {
    let mut finite = true;
    // The naive form overflows beyond |κz| ≈ 709; the stable one must not.
    for kz in [500.0f64, -500.0, 800.0, -800.0] {
        for l in [1e-3, 0.5, 1.0, 10.0, 1e3] {
            let p = ActivationParams::new(1.0, l).unwrap();
            let (a, g) = (apa_eval(kz, &p).unwrap(), aglu_eval(kz, &p).unwrap());
            finite &= [a.value, a.d_input, a.d_kappa, a.d_lambda, g.value, g.d_input, g.d_kappa, g.d_lambda]
                .iter()
                .all(|v| v.is_finite());
        }
    }
    let naive_overflows = (800.0f64).exp().is_infinite();
    let mut rng = seeded_rng(3);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..100_000 {
        let z: f64 = rng.gen_range(-30.0..30.0);
        let k: f64 = rng.gen_range(-3.0..3.0);
        let l: f64 = rng.gen_range(-6.9f64..6.9).exp();
        let naive = (l * (-k * z).exp() + 1.0).powf(-1.0 / l);
        if !(naive.is_finite() && naive > 1e-250) {
            continue;
        }
        compared += 1;
        let v = apa_forward(z, &ActivationParams::new(k, l).unwrap()).unwrap();
        worst = worst.max(((v - naive) / naive).abs());
    }
    verdict(
        finite && naive_overflows && worst < 1e-10,
        format!("finite at kz = +-500 and +-800; max rel gap to naive form {worst:.2e} over {compared} points"),
    )
}

fn table_verdicts(family: Family) -> usize {
    (0..100u64)
        .filter(|&seed| {
            let classes = (0..5u64)
                .map(|c| {
                    let loc = -(c as f64) * 0.5;
                    let scale = 0.5 + 0.25 * c as f64;
                    sample_theoretical::<f64>(family, loc, scale, 10_000, seed * 31 + c)
                        .unwrap()
                        .samples()
                        .to_vec()
                })
                .collect();
            let frac = logit_alignment_report(&ClassLogitTable::from_samples(classes))
                .gumbel_fraction
                .unwrap();
            match family {
                Family::Gumbel => frac > 0.5,
                Family::Logistic => frac < 0.5,
            }
        })
        .count()
}

fn ks_direction() -> Verdict {
    let start = Instant::now();
    let g = table_verdicts(Family::Gumbel);
    let l = table_verdicts(Family::Logistic);
    let timing = within(Duration::from_secs(30), start);
    verdict(
        g >= 95 && l >= 95 && timing.is_ok(),
        format!(
            "Gumbel tables Gumbel-closer in {g}/100 seeds, Logistic tables Logistic-closer in {l}/100 {}",
            timing.err().unwrap_or_default()
        ),
    )
}

fn nc1_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    for (seed, n, d, k) in [(1u64, 50, 5, 4), (2, 20, 3, 2), (3, 9, 1, 3), (4, 50, 2, 5)] {
        let mut rng = seeded_rng(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let f = Tensor::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let p = covariances(&f, &labels).unwrap();
        let mut mu = vec![vec![0.0; d]; k];
        let mut g = vec![0.0; d];
        for i in 0..n {
            let size = labels.iter().filter(|&&y| y == labels[i]).count() as f64;
            for j in 0..d {
                mu[labels[i]][j] += f[(i, j)] / size;
                g[j] += f[(i, j)] / n as f64;
            }
        }
        for a in 0..d {
            for b in 0..d {
                let mut w = 0.0;
                for i in 0..n {
                    w += (f[(i, a)] - mu[labels[i]][a]) * (f[(i, b)] - mu[labels[i]][b]);
                }
                let mut s = 0.0;
                for c in 0..k {
                    s += (mu[c][a] - g[a]) * (mu[c][b] - g[b]);
                }
                worst = worst.max((p.sigma_w[(a, b)] - w / n as f64).abs());
                worst = worst.max((p.sigma_b[(a, b)] - s / k as f64).abs());
            }
        }
    }
    let collapsed = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![0.0, 2.0]]).unwrap();
    let zero: f64 = nc1(&covariances(&collapsed, &[0, 0, 1, 1]).unwrap()).unwrap();
    let id: f64 = nc1(&CovariancePair {
        sigma_w: Tensor::identity(4),
        sigma_b: Tensor::identity(4),
        classes: 8,
        dim: 4,
    })
    .unwrap();
    let mut rng = seeded_rng(9);
    let centers = [[3.0, 0.0, 1.0], [-1.0, 2.0, 0.0], [0.0, -2.0, -1.0]];
    let noise: Vec<f64> = (0..90 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let build = |s: f64| {
        // Centered noise per class keeps class means fixed under scaling.
        let mut data = vec![0.0; 90 * 3];
        for c in 0..3 {
            for j in 0..3 {
                let idx: Vec<usize> = (0..90).filter(|i| i % 3 == c).collect();
                let m = idx.iter().map(|&i| noise[i * 3 + j]).sum::<f64>() / idx.len() as f64;
                for &i in &idx {
                    data[i * 3 + j] = centers[c][j] + s * (noise[i * 3 + j] - m);
                }
            }
        }
        let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
        nc1(&covariances(&Tensor::from_vec(90, 3, data).unwrap(), &labels).unwrap()).unwrap()
    };
    let ratio = build(0.25) / build(1.0);
    verdict(
        worst < 1e-10 && zero.abs() < 1e-8 && (id - 0.5).abs() < 1e-8 && (ratio - 1.0 / 16.0).abs() < 1e-8,
        format!(
            "oracle gap {worst:.1e}; collapsed {zero:.1e}; identity d/K {id}; quarter spread ratio {ratio:.10}"
        ),
    )
}

fn entropy_cases() -> Verdict {
    let h = |v: Vec<f64>| attention_entropy(&Tensor::from_vec(1, v.len(), v).unwrap(), LogBase::Two).unwrap();
    let half = h(vec![0.5; 16]);
    let sat = h(vec![1.0 - 1e-7; 16]);
    let mut rng = seeded_rng(4);
    let mut asym: f64 = 0.0;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
        let flipped = v.iter().map(|a| 1.0 - a).collect();
        asym = asym.max((h(v) - h(flipped)).abs());
    }
    verdict(
        (half - 1.0).abs() < 1e-9 && sat < 1e-5 && asym < 1e-9,
        format!("E(0.5) = {half}, E(saturated) = {sat:.2e}, max asymmetry {asym:.1e}"),
    )
}

fn print_comparison(label: &str, c: &GateComparison) {
    println!("    {label}: seed  apa few  sig few  apa avg  sig avg  apa nc1  sig nc1");
    for s in &c.seeds {
        println!(
            "    {label}: {:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3} {:>8.3}",
            s.seed,
            s.apa.few.unwrap_or(f64::NAN),
            s.sigmoid.few.unwrap_or(f64::NAN),
            s.apa.average,
            s.sigmoid.average,
            s.apa.nc1,
            s.sigmoid.nc1
        );
    }
}

fn gate_experiments() -> (Verdict, Verdict) {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let long_tail = compare_gates(&ToyConfig::default(), &seeds).unwrap();
    let mut balanced_cfg = ToyConfig::default();
    balanced_cfg.data.imbalance = 1.0;
    let balanced = compare_gates(&balanced_cfg, &seeds).unwrap();
    let timing = within(Duration::from_secs(300), start);
    print_comparison("IF=100", &long_tail);
    print_comparison("IF=1", &balanced);

    let gain = long_tail.few_gain.unwrap();
    let bal_few = balanced.few_gain.unwrap();
    let bal_avg = balanced.average_gain;
    let detail = format!(
        "IF=100 few-group gain {:+.2} pts (APA - Sigmoid, 10 seeds); IF=1 few gap {:+.2} pts, average gap {:+.2} pts {}",
        100.0 * gain,
        100.0 * bal_few,
        100.0 * bal_avg,
        timing.clone().err().unwrap_or_default()
    );
    let accuracy = if gain >= 0.0 && timing.is_ok() {
        if bal_few.abs() <= 0.02 && bal_avg.abs() <= 0.02 {
            Verdict::Pass(detail)
        } else {
            Verdict::Warn(format!("{detail}; balanced gap exceeds 2 pts"))
        }
    } else {
        Verdict::Fail(detail)
    };
    let collapse = verdict(
        long_tail.nc1_shift <= 0.0,
        format!(
            "mean NC1 shift {:+.3} (APA - Sigmoid), paired effect size {:.3}, APA lower in {}/10 seeds",
            long_tail.nc1_shift, long_tail.nc1_effect, long_tail.nc1_wins
        ),
    );
    (accuracy, collapse)
}

fn apa(dir: &Path, args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_apa"))
        .args(args)
        .current_dir(dir)
        .env_remove("APA_SEED")
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = ToyConfig::default();
    cfg.data.classes = 6;
    cfg.data.n_max = 120;
    cfg.train.epochs = 4;
    cfg.model.attention.as_mut().unwrap().dropout = 0.1;
    std::fs::write(d.join("cfg.json"), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let commands: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (vec!["grad-check", "--probes", "200", "--seed", "5", "--out", "grad.json"], vec!["grad.json"]),
        (vec!["limits-check", "--out", "limits.json"], vec!["limits.json"]),
        (vec!["example-config", "--imbalance", "10"], vec![]),
        (vec!["gen-logits", "--family", "gumbel", "--rows", "2000", "--seed", "1", "--out", "g.csv"], vec!["g.csv"]),
        (vec!["analyze-logits", "--input", "g.csv", "--out", "ks.json", "--csv", "ks.csv"], vec!["ks.json", "ks.csv"]),
        (
            vec!["train-toy", "--config", "cfg.json", "--out", "run.json", "--features-out", "f.csv", "--logits-out", "l.csv"],
            vec!["run.json", "f.csv", "l.csv"],
        ),
        (vec!["attention-entropy", "--run", "run.json", "--out", "ent.json"], vec!["ent.json"]),
        (vec!["nc1", "--features", "f.csv", "--out", "nc1.json"], vec!["nc1.json"]),
        (vec!["compare-gates", "--config", "cfg.json", "--seeds", "2", "--out", "cmp.json"], vec!["cmp.json"]),
    ];
    let mut mismatched = Vec::new();
    for (args, files) in &commands {
        let (c1, o1) = apa(d, args);
        let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(d.join(f)).unwrap_or_default()).collect();
        let (c2, o2) = apa(d, args);
        let second: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(d.join(f)).unwrap_or_default()).collect();
        if c1 != 0 || c1 != c2 || o1 != o2 || first != second || first.iter().any(Vec::is_empty) {
            mismatched.push(args[0]);
        }
    }
    verdict(
        mismatched.is_empty(),
        format!(
            "{} commands rerun with identical flags; differing or failing: {:?}",
            commands.len(),
            mismatched
        ),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(&str, Verdict)> = vec![
        ("1 gradient fidelity", gradient_fidelity()),
        ("2 unification identities", unification()),
        ("3 numerical stability", stability()),
        ("4 KS direction", ks_direction()),
        ("5 NC1 oracle", nc1_oracle()),
        ("6 attention entropy cases", entropy_cases()),
    ];
    let (accuracy, collapse) = gate_experiments();
    results.push(("7 few-group accuracy, APA vs Sigmoid gate", accuracy));
    results.push(("8 NC1 direction, APA vs Sigmoid gate", collapse));
    results.push(("9 determinism", determinism()));

    let mut failed = Vec::new();
    for (name, v) in &results {
        match v {
            Verdict::Pass(d) => println!("PASS  criterion {name}: {d}"),
            Verdict::Warn(d) => println!("PASS  criterion {name} (warning): {d}"),
            Verdict::Fail(d) => {
                println!("FAIL  criterion {name}: {d}");
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
