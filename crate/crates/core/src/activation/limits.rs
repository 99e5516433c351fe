//! Checks that APA/AGLU reduce to the classical activations at the
//! corresponding parameter settings.

use serde::{Deserialize, Serialize};

use crate::activation::adaptive::{aglu_forward, apa_forward};
use crate::activation::params::{ActivationKind, ActivationParams};
use crate::activation::reference::{reference_forward, GELU_SIGMOID_GAIN};
use crate::scalar::{lit, Scalar};

/// Inputs at which every identity is probed.
pub const PROBE_GRID: [f64; 7] = [-5.0, -2.0, -0.5, 0.0, 0.5, 2.0, 5.0];

/// λ used to approach the `λ → 0` limit.
pub const SMALL_LAMBDA: f64 = 1e-6;
/// κ used to approach the `κ → ∞` limit.
pub const LARGE_KAPPA: f64 = 100.0;
/// λ used to approach the `λ → ∞` limit. The residual `|z|·ln(λe^{−z}+1)/λ`
/// must stay below 1e−5 on the whole grid, which λ = 1e6 does not achieve.
pub const LARGE_LAMBDA: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unification {
    /// APA(κ=1, λ=1) = Sigmoid
    Sigmoid,
    /// APA(κ=1, λ→0) = Gumbel
    Gumbel,
    /// AGLU(κ=1, λ=1) = SiLU
    Silu,
    /// AGLU(κ=1.702, λ=1) = z·σ(1.702z)
    Gelu,
    /// AGLU(κ→∞, λ=1) = ReLU
    Relu,
    /// AGLU(κ=1, λ→∞) = z
    Identity,
    /// AGLU(κ=1, λ→∞) = PReLU(κ=1)
    PreluSmooth,
}

impl Unification {
    pub const ALL: [Unification; 7] = [
        Self::Sigmoid,
        Self::Gumbel,
        Self::Silu,
        Self::Gelu,
        Self::Relu,
        Self::Identity,
        Self::PreluSmooth,
    ];

    /// Whether the identity holds exactly (as opposed to in a limit).
    pub fn is_exact(self) -> bool {
        matches!(self, Self::Sigmoid | Self::Silu | Self::Gelu)
    }

    fn setting(self) -> (bool, f64, f64) {
        // (uses AGLU, κ, λ)
        match self {
            Self::Sigmoid => (false, 1.0, 1.0),
            Self::Gumbel => (false, 1.0, SMALL_LAMBDA),
            Self::Silu => (true, 1.0, 1.0),
            Self::Gelu => (true, GELU_SIGMOID_GAIN, 1.0),
            Self::Relu => (true, LARGE_KAPPA, 1.0),
            Self::Identity | Self::PreluSmooth => (true, 1.0, LARGE_LAMBDA),
        }
    }

    fn target<T: Scalar>(self) -> ActivationKind<T> {
        match self {
            Self::Sigmoid => ActivationKind::Sigmoid,
            Self::Gumbel => ActivationKind::Gumbel,
            Self::Silu => ActivationKind::Silu,
            Self::Gelu => ActivationKind::Gelu,
            Self::Relu => ActivationKind::Relu,
            Self::Identity => ActivationKind::Identity,
            Self::PreluSmooth => ActivationKind::Prelu { kappa: T::one() },
        }
    }

    /// `|adaptive(z) − reference(z)|` at a single input.
    pub fn deviation_at<T: Scalar>(self, z: T) -> T {
        let (aglu, k, l) = self.setting();
        let p = ActivationParams::new(lit::<T>(k), lit::<T>(l)).expect("valid constants");
        let adaptive = if aglu {
            aglu_forward(z, &p)
        } else {
            apa_forward(z, &p)
        }
        .expect("finite probe");
        let reference = reference_forward(&self.target(), z).expect("finite probe");
        (adaptive - reference).abs()
    }

    pub fn describe(self) -> &'static str {
        match self {
            Self::Sigmoid => "APA(k=1,l=1) = sigmoid",
            Self::Gumbel => "APA(k=1,l=1e-6) ~ gumbel",
            Self::Silu => "AGLU(k=1,l=1) = silu",
            Self::Gelu => "AGLU(k=1.702,l=1) = z*sigmoid(1.702z)",
            Self::Relu => "AGLU(k=100,l=1) ~ relu",
            Self::Identity => "AGLU(k=1,l=1e8) ~ identity",
            Self::PreluSmooth => "AGLU(k=1,l=1e8) ~ prelu(k=1)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub identity: Unification,
    pub description: String,
    pub max_deviation: f64,
    pub worst_input: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitsReport {
    pub tolerance: f64,
    pub checks: Vec<IdentityCheck>,
}

impl LimitsReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Probes every unification identity over [`PROBE_GRID`] in scalar type `T`.
///
/// A non-positive or non-finite tolerance fails every check.
pub fn limits_check<T: Scalar>(tolerance: f64) -> LimitsReport {
    let checks = Unification::ALL
        .iter()
        .map(|&u| {
            let (worst_input, max_deviation) = PROBE_GRID
                .iter()
                .map(|&z| (z, u.deviation_at(lit::<T>(z)).to_f64().unwrap_or(f64::INFINITY)))
                .fold((PROBE_GRID[0], 0.0f64), |acc, (z, d)| if d > acc.1 { (z, d) } else { acc });
            IdentityCheck {
                identity: u,
                description: u.describe().to_string(),
                max_deviation,
                worst_input,
                passed: tolerance > 0.0 && max_deviation <= tolerance,
            }
        })
        .collect();
    LimitsReport { tolerance, checks }
}
