//! Adaptive parametric activations (APA, AGLU) and the fixed activations they
//! generalise.

mod adaptive;
mod limits;
mod params;
mod reference;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use adaptive::{
    aglu_eval, aglu_forward, aglu_grad_input, aglu_grad_kappa, aglu_grad_lambda, apa_eval, apa_forward,
    apa_grad_input, apa_grad_kappa, apa_grad_lambda, AdaptiveEval,
};
pub use limits::{limits_check, IdentityCheck, LimitsReport, Unification, LARGE_KAPPA, LARGE_LAMBDA, PROBE_GRID, SMALL_LAMBDA};
pub use params::{ActivationKind, ActivationParams, ActivationTag};
pub use reference::{
    activate, activate_with_grad, gumbel, reference_forward, reference_grad_input, GELU_SIGMOID_GAIN,
};

/// Applies an activation elementwise.
pub fn apply<T: Scalar>(kind: &ActivationKind<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    x.try_map(|z| activate(kind, z))
}
