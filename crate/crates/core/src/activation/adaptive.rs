//! APA and AGLU: forward values and exact partial derivatives.
//!
//! All evaluation goes through the shifted log-argument `a = ln λ − κz`:
//!
//! ```text
//! ln η(z, κ, λ) = −softplus(a) / λ
//! 1 / (λ + e^{κz}) = sigmoid(a) / λ
//! ∂ ln η / ∂λ = (softplus(a) − sigmoid(a)) / λ²
//! ```
//!
//! which never forms `exp(−κz)` directly and so stays finite for any finite
//! input. The difference `softplus(a) − sigmoid(a)` cancels as `a → −∞`; there
//! it is summed as the series `Σ_{n≥2} uⁿ/n` with `u = sigmoid(a)`.

use crate::activation::params::ActivationParams;
use crate::error::{ApaError, Result};
use crate::scalar::{count, lit, sigmoid, softplus, Scalar};

/// Value of an adaptive activation and its three partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveEval<T> {
    pub value: T,
    pub d_input: T,
    pub d_kappa: T,
    pub d_lambda: T,
}

fn check<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<()> {
    if !z.is_finite() {
        return Err(ApaError::Domain(format!("input must be finite, got {z}")));
    }
    p.validate()
}

/// `softplus(a) − sigmoid(a)`, i.e. `ln(1+t) − t/(1+t)` with `t = eᵃ`.
fn log_gap<T: Scalar>(a: T) -> T {
    let u = sigmoid(a);
    if u > lit(0.25) {
        return softplus(a) - u;
    }
    let mut sum = T::zero();
    let mut pow = u * u;
    let mut n = 2usize;
    loop {
        let term = pow / count(n);
        sum = sum + term;
        if term <= T::epsilon() * sum || n > 200 {
            return sum;
        }
        pow = pow * u;
        n += 1;
    }
}

/// `η` from the shifted argument. At λ = 1 this is exactly `sigmoid(κz)`,
/// evaluated as such so the two agree bit for bit.
#[inline]
fn eta_from<T: Scalar>(a: T, lambda: T) -> T {
    if lambda == T::one() {
        sigmoid(-a)
    } else {
        (-softplus(a) / lambda).exp()
    }
}

struct Parts<T> {
    eta: T,
    /// `1 / (λ + e^{κz})`
    inv: T,
    /// `∂η/∂λ`
    d_eta_lambda: T,
}

fn parts<T: Scalar>(z: T, p: &ActivationParams<T>) -> Parts<T> {
    let a = p.lambda.ln() - p.kappa * z;
    let eta = eta_from(a, p.lambda);
    let inv = sigmoid(a) / p.lambda;
    let d_eta_lambda = eta * log_gap(a) / (p.lambda * p.lambda);
    Parts {
        eta,
        inv,
        d_eta_lambda,
    }
}

/// Adaptive Parametric Activation `η(z) = (λ·e^{−κz} + 1)^{−1/λ}`.
///
/// κ = λ = 1 gives the sigmoid; λ → 0 with κ = 1 tends to the Gumbel CDF.
pub fn apa_forward<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    check(z, p)?;
    let a = p.lambda.ln() - p.kappa * z;
    Ok(eta_from(a, p.lambda))
}

/// Adaptive Generalised Linear Unit `z · η(z)`.
pub fn aglu_forward<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    Ok(z * apa_forward(z, p)?)
}

pub fn apa_grad_input<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    check(z, p)?;
    let q = parts(z, p);
    Ok(p.kappa * q.eta * q.inv)
}

pub fn apa_grad_kappa<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    check(z, p)?;
    let q = parts(z, p);
    Ok(z * q.eta * q.inv)
}

/// `∂η/∂λ = η · [ln(λe^{−κz} + 1)/λ² − 1/(λ(λ + e^{κz}))]`.
pub fn apa_grad_lambda<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    check(z, p)?;
    Ok(parts(z, p).d_eta_lambda)
}

/// `∂AGLU/∂κ = z² · η / (λ + e^{κz})`.
pub fn aglu_grad_kappa<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    check(z, p)?;
    let q = parts(z, p);
    Ok(z * z * q.eta * q.inv)
}

/// `∂AGLU/∂λ = z · ∂η/∂λ`.
///
/// Includes the `ln(λe^{−κz} + 1)/λ²` term coming from differentiating the
/// exponent `−1/λ`; without it the result disagrees with finite differences.
pub fn aglu_grad_lambda<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    check(z, p)?;
    Ok(z * parts(z, p).d_eta_lambda)
}

/// `∂AGLU/∂z = κz · η / (λ + e^{κz}) + η`.
pub fn aglu_grad_input<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<T> {
    check(z, p)?;
    let q = parts(z, p);
    Ok(p.kappa * z * q.eta * q.inv + q.eta)
}

/// APA value and all partials in a single pass.
pub fn apa_eval<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<AdaptiveEval<T>> {
    check(z, p)?;
    let q = parts(z, p);
    Ok(AdaptiveEval {
        value: q.eta,
        d_input: p.kappa * q.eta * q.inv,
        d_kappa: z * q.eta * q.inv,
        d_lambda: q.d_eta_lambda,
    })
}

/// AGLU value and all partials in a single pass.
pub fn aglu_eval<T: Scalar>(z: T, p: &ActivationParams<T>) -> Result<AdaptiveEval<T>> {
    check(z, p)?;
    let q = parts(z, p);
    Ok(AdaptiveEval {
        value: z * q.eta,
        d_input: p.kappa * z * q.eta * q.inv + q.eta,
        d_kappa: z * z * q.eta * q.inv,
        d_lambda: z * q.d_eta_lambda,
    })
}
