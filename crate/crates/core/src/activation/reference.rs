//! Fixed activations that APA/AGLU generalise.

use crate::activation::adaptive::{aglu_eval, aglu_forward, apa_eval, apa_forward};
use crate::activation::params::ActivationKind;
use crate::error::{ApaError, Result};
use crate::scalar::{lit, sigmoid, softplus, Scalar};

/// Coefficient of the sigmoid approximation of GELU.
pub const GELU_SIGMOID_GAIN: f64 = 1.702;

fn finite<T: Scalar>(z: T) -> Result<T> {
    if z.is_finite() {
        Ok(z)
    } else {
        Err(ApaError::Domain(format!("input must be finite, got {z}")))
    }
}

pub fn gumbel<T: Scalar>(z: T) -> T {
    (-(-z).exp()).exp()
}

/// Evaluates a non-adaptive activation.
///
/// GELU is the sigmoid form `z·σ(1.702z)`, not the erf form.
pub fn reference_forward<T: Scalar>(kind: &ActivationKind<T>, z: T) -> Result<T> {
    let z = finite(z)?;
    let zero = T::zero();
    Ok(match *kind {
        ActivationKind::Relu => z.max(zero),
        ActivationKind::Sigmoid => sigmoid(z),
        ActivationKind::Gumbel => gumbel(z),
        ActivationKind::Silu => z * sigmoid(z),
        ActivationKind::Gelu => z * sigmoid(lit::<T>(GELU_SIGMOID_GAIN) * z),
        ActivationKind::Prelu { kappa } => z.max(zero) + kappa * z.min(zero),
        ActivationKind::Elu { kappa } => z.max(zero) + kappa * (z.min(zero).exp() - T::one()),
        ActivationKind::Mish => z * softplus(z).tanh(),
        ActivationKind::Identity => z,
        ActivationKind::Apa { .. } | ActivationKind::Aglu { .. } => {
            return Err(ApaError::Domain(
                "adaptive activations are evaluated by apa_forward/aglu_forward".into(),
            ))
        }
    })
}

/// Derivative of a non-adaptive activation with respect to its input.
/// ReLU and PReLU take the right-hand slope at zero.
pub fn reference_grad_input<T: Scalar>(kind: &ActivationKind<T>, z: T) -> Result<T> {
    let z = finite(z)?;
    let one = T::one();
    let zero = T::zero();
    Ok(match *kind {
        ActivationKind::Relu => {
            if z >= zero {
                one
            } else {
                zero
            }
        }
        ActivationKind::Sigmoid => {
            let s = sigmoid(z);
            s * (one - s)
        }
        ActivationKind::Gumbel => {
            let e = (-z).exp();
            (-e).exp() * e
        }
        ActivationKind::Silu => {
            let s = sigmoid(z);
            s + z * s * (one - s)
        }
        ActivationKind::Gelu => {
            let g = lit::<T>(GELU_SIGMOID_GAIN);
            let s = sigmoid(g * z);
            s + g * z * s * (one - s)
        }
        ActivationKind::Prelu { kappa } => {
            if z >= zero {
                one
            } else {
                kappa
            }
        }
        ActivationKind::Elu { kappa } => {
            if z >= zero {
                one
            } else {
                kappa * z.exp()
            }
        }
        ActivationKind::Mish => {
            let t = softplus(z).tanh();
            t + z * (one - t * t) * sigmoid(z)
        }
        ActivationKind::Identity => one,
        ActivationKind::Apa { .. } | ActivationKind::Aglu { .. } => {
            return Err(ApaError::Domain(
                "adaptive activations are differentiated by the apa_/aglu_ gradient functions".into(),
            ))
        }
    })
}

/// Evaluates any activation, adaptive or not.
pub fn activate<T: Scalar>(kind: &ActivationKind<T>, z: T) -> Result<T> {
    match kind {
        ActivationKind::Apa { params } => apa_forward(z, params),
        ActivationKind::Aglu { params } => aglu_forward(z, params),
        other => reference_forward(other, z),
    }
}

/// Value, input derivative and (for adaptive kinds) `∂/∂κ`, `∂/∂λ`.
pub fn activate_with_grad<T: Scalar>(kind: &ActivationKind<T>, z: T) -> Result<(T, T, T, T)> {
    match kind {
        ActivationKind::Apa { params } => {
            let e = apa_eval(z, params)?;
            Ok((e.value, e.d_input, e.d_kappa, e.d_lambda))
        }
        ActivationKind::Aglu { params } => {
            let e = aglu_eval(z, params)?;
            Ok((e.value, e.d_input, e.d_kappa, e.d_lambda))
        }
        other => Ok((
            reference_forward(other, z)?,
            reference_grad_input(other, z)?,
            T::zero(),
            T::zero(),
        )),
    }
}
