//! Finite-difference oracles for the analytic activation derivatives and for
//! full model backpropagation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{
    aglu_grad_input, aglu_grad_kappa, aglu_grad_lambda, apa_grad_input, apa_grad_kappa, apa_grad_lambda,
    ActivationParams,
};
use crate::datagen::seeded_rng;
use crate::error::{ApaError, Result};
use crate::nn::{loss_and_grad, LossKind, Mode, Network, ParamRole};
use crate::tensor::Tensor;

/// A numerical derivative and the round-off scale of the differences it was
/// built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEstimate {
    pub value: f64,
    /// Approximate absolute error from cancellation in `f(x+h) − f(x−h)`.
    pub noise: f64,
}

const MAX_HALVINGS: usize = 10;
/// Rounding error of one function evaluation, in ulps of its value; the
/// oracles chain about four correctly rounded operations.
const EVAL_ULPS: f64 = 4.0;
const AGREEMENT: f64 = 1e-8;

/// Central difference refined by Richardson extrapolation. The step starts
/// at `h0` and shrinks by 4 until two consecutive extrapolations agree; the
/// estimate with the smallest change is returned.
pub fn central_difference<F>(f: F, x: f64, h0: f64) -> Option<FdEstimate>
where
    F: Fn(f64) -> Option<f64>,
{
    let diff = |h: f64| -> Option<(f64, f64)> {
        let (a, b) = (f(x + h)?, f(x - h)?);
        let scale = a.abs().max(b.abs());
        Some(((a - b) / (2.0 * h), EVAL_ULPS * f64::EPSILON * scale / h))
    };
    let richardson = |h: f64| -> Option<FdEstimate> {
        let (d1, n1) = diff(h)?;
        let (d2, n2) = diff(h / 2.0)?;
        Some(FdEstimate {
            value: (4.0 * d2 - d1) / 3.0,
            noise: (4.0 * n2 + n1) / 3.0,
        })
    };
    let mut h = h0;
    let mut prev = richardson(h)?;
    let mut best = prev;
    let mut best_change = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        h /= 4.0;
        let next = richardson(h)?;
        let change = (next.value - prev.value).abs();
        if change < best_change {
            best_change = change;
            best = FdEstimate {
                value: next.value,
                noise: next.noise,
            };
        }
        if change <= AGREEMENT * next.value.abs().max(1.0) {
            break;
        }
        prev = next;
    }
    best.value.is_finite().then_some(best)
}

/// Differences below this many multiples of the round-off scale count as
/// noise rather than as disagreement.
pub const NOISE_FLOOR: f64 = 1e6;

/// Magnitudes below this lose relative precision to gradual underflow and
/// are compared in absolute terms.
pub const TINY: f64 = f64::MIN_POSITIVE / f64::EPSILON;

/// `|a − n| / max(|a|, |n|, NOISE_FLOOR · noise, TINY)`.
pub fn relative_error(analytic: f64, numeric: FdEstimate) -> f64 {
    let diff = (analytic - numeric.value).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic
        .abs()
        .max(numeric.value.abs())
        .max(NOISE_FLOOR * numeric.noise)
        .max(TINY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeOp {
    ApaInput,
    ApaKappa,
    ApaLambda,
    AgluInput,
    AgluKappa,
    AgluLambda,
}

#[derive(Clone, Copy)]
enum Var {
    Z,
    Kappa,
    Lambda,
}

impl DerivativeOp {
    pub const ALL: [DerivativeOp; 6] = [
        DerivativeOp::ApaInput,
        DerivativeOp::ApaKappa,
        DerivativeOp::ApaLambda,
        DerivativeOp::AgluInput,
        DerivativeOp::AgluKappa,
        DerivativeOp::AgluLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DerivativeOp::ApaInput => "dAPA/dz",
            DerivativeOp::ApaKappa => "dAPA/dkappa",
            DerivativeOp::ApaLambda => "dAPA/dlambda",
            DerivativeOp::AgluInput => "dAGLU/dz",
            DerivativeOp::AgluKappa => "dAGLU/dkappa",
            DerivativeOp::AgluLambda => "dAGLU/dlambda",
        }
    }

    fn var(self) -> Var {
        match self {
            DerivativeOp::ApaInput | DerivativeOp::AgluInput => Var::Z,
            DerivativeOp::ApaKappa | DerivativeOp::AgluKappa => Var::Kappa,
            DerivativeOp::ApaLambda | DerivativeOp::AgluLambda => Var::Lambda,
        }
    }

    fn is_apa(self) -> bool {
        matches!(self, DerivativeOp::ApaInput | DerivativeOp::ApaKappa | DerivativeOp::ApaLambda)
    }

    pub fn analytic(self, z: f64, p: &ActivationParams<f64>) -> Result<f64> {
        match self {
            DerivativeOp::ApaInput => apa_grad_input(z, p),
            DerivativeOp::ApaKappa => apa_grad_kappa(z, p),
            DerivativeOp::ApaLambda => apa_grad_lambda(z, p),
            DerivativeOp::AgluInput => aglu_grad_input(z, p),
            DerivativeOp::AgluKappa => aglu_grad_kappa(z, p),
            DerivativeOp::AgluLambda => aglu_grad_lambda(z, p),
        }
    }

    /// Finite-difference estimate of the same derivative.
    ///
    /// The difference is taken on `ln η = −ln(1 + λe^{−κz})/λ`, which keeps
    /// full relative precision where η is close to 1, and mapped back with
    /// `∂η = η · ∂ln η` and `AGLU = z · η`.
    pub fn numeric(self, z: f64, kappa: f64, lambda: f64) -> Option<FdEstimate> {
        let log_eta = |z: f64, k: f64, l: f64| -> Option<f64> {
            (l > 0.0).then(|| -(l * (-k * z).exp()).ln_1p() / l).filter(|v| v.is_finite())
        };
        let eta = log_eta(z, kappa, lambda)?.exp();
        let d = match self.var() {
            Var::Z => central_difference(|t| log_eta(t, kappa, lambda), z, 1e-3 * z.abs().max(1.0)),
            Var::Kappa => central_difference(|t| log_eta(z, t, lambda), kappa, 1e-3 * kappa.abs().max(1.0)),
            Var::Lambda => central_difference(|t| log_eta(z, kappa, t), lambda, 1e-3 * lambda),
        }?;
        let d_eta = FdEstimate {
            value: eta * d.value,
            noise: eta * d.noise,
        };
        Some(match (self.is_apa(), self.var()) {
            (true, _) => d_eta,
            (false, Var::Z) => FdEstimate {
                value: eta + z * d_eta.value,
                noise: z.abs() * d_eta.noise,
            },
            (false, _) => FdEstimate {
                value: z * d_eta.value,
                noise: z.abs() * d_eta.noise,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCheck {
    pub op: DerivativeOp,
    pub name: String,
    pub max_rel_error: f64,
    /// `(z, κ, λ)` of the worst probe.
    pub worst: (f64, f64, f64),
    /// Probes where the analytic value was not finite.
    pub non_finite: usize,
    /// Probes where no finite-difference estimate could be formed.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probes: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub checks: Vec<OpCheck>,
}

impl ProbeReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn non_finite(&self) -> usize {
        self.checks.iter().map(|c| c.non_finite).sum()
    }

    pub fn passed(&self) -> bool {
        self.non_finite() == 0 && self.max_rel_error() < self.tolerance
    }
}

pub const PROBE_Z: (f64, f64) = (-10.0, 10.0);
pub const PROBE_KAPPA: (f64, f64) = (-3.0, 3.0);
/// λ is drawn log-uniformly from this range.
pub const PROBE_LAMBDA: (f64, f64) = (1e-3, 1e3);

/// Random `(z, κ, λ)` probes for [`activation_probe_suite`].
pub fn draw_probes(probes: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = seeded_rng(seed);
    let (llo, lhi) = (PROBE_LAMBDA.0.ln(), PROBE_LAMBDA.1.ln());
    (0..probes)
        .map(|_| {
            let z = rng.gen_range(PROBE_Z.0..=PROBE_Z.1);
            let k = rng.gen_range(PROBE_KAPPA.0..=PROBE_KAPPA.1);
            let l = rng.gen_range(llo..=lhi).exp();
            (z, k, l)
        })
        .collect()
}

/// Compares all six analytic partials of APA and AGLU against finite
/// differences at `probes` random points.
pub fn activation_probe_suite(probes: usize, seed: u64, tolerance: f64) -> Result<ProbeReport> {
    if probes == 0 {
        return Err(ApaError::Spec("probe count must be positive".into()));
    }
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(ApaError::Spec(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let points = draw_probes(probes, seed);
    let checks = DerivativeOp::ALL
        .par_iter()
        .map(|&op| {
            let mut check = OpCheck {
                op,
                name: op.name().to_string(),
                max_rel_error: 0.0,
                worst: points[0],
                non_finite: 0,
                skipped: 0,
            };
            for &(z, k, l) in &points {
                let p = ActivationParams::new(k, l)?;
                let a = op.analytic(z, &p)?;
                if !a.is_finite() {
                    check.non_finite += 1;
                    continue;
                }
                let Some(n) = op.numeric(z, k, l) else {
                    check.skipped += 1;
                    continue;
                };
                let e = relative_error(a, n);
                if e > check.max_rel_error {
                    check.max_rel_error = e;
                    check.worst = (z, k, l);
                }
            }
            Ok(check)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport {
        probes,
        seed,
        tolerance,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

/// Compares backpropagated gradients of the mean loss with finite differences
/// for every trainable scalar of `model`. With `dropout_seed`, both passes run
/// in training mode with the same mask stream; otherwise in evaluation mode.
pub fn model_gradient_check(
    model: &Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    loss: LossKind,
    dropout_seed: Option<u64>,
) -> Result<ModelCheck> {
    let eval_loss = |net: &mut Network<f64>| -> Result<(f64, Tensor<f64>)> {
        let logits = match dropout_seed {
            Some(s) => net.forward(x, Mode::Train(&mut seeded_rng(s)))?,
            None => net.forward(x, Mode::Eval)?,
        };
        loss_and_grad(loss, &logits, labels)
    };
    let mut base = model.clone();
    let (_, g) = eval_loss(&mut base)?;
    let grads = base.backward(&g)?;

    let store = model.params();
    let entries: Vec<_> = store
        .ids()
        .filter(|&id| store.trainable(id))
        .flat_map(|id| (0..store.value(id).len()).map(move |k| (id, k)))
        .collect();
    let errors = entries
        .par_iter()
        .map(|&(id, k)| -> Result<(f64, String)> {
            let theta = store.value(id).data()[k];
            let h0 = match store.role(id) {
                ParamRole::Lambda => 1e-4 * theta,
                _ => 1e-4 * theta.abs().max(1.0),
            };
            let f = |t: f64| -> Option<f64> {
                let mut net = model.clone();
                net.params_mut().value_mut(id).data_mut()[k] = t;
                eval_loss(&mut net).ok().map(|(l, _)| l)
            };
            let label = format!("{}[{k}]", store.name(id));
            let numeric = central_difference(f, theta, h0)
                .ok_or_else(|| ApaError::NonFinite(format!("finite difference failed at {label}")))?;
            Ok((relative_error(grads.get(id).data()[k], numeric), label))
        })
        .collect::<Result<Vec<_>>>()?;
    let (max_rel_error, worst) = errors
        .into_iter()
        .fold((0.0, String::new()), |acc, e| if e.0 > acc.0 { e } else { acc });
    Ok(ModelCheck {
        checked: entries.len(),
        max_rel_error,
        worst,
    })
}
