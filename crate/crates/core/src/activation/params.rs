use serde::{Deserialize, Serialize};

use crate::error::{ApaError, Result};
use crate::scalar::Scalar;

/// The learnable `(κ, λ)` pair of an adaptive activation.
///
/// `kappa` is the gain (sharpness), `lambda` the asymmetry. `lambda` must be
/// strictly positive; the flags mark which of the two an optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActivationParams<T> {
    pub kappa: T,
    pub lambda: T,
    #[serde(default = "yes")]
    pub learn_kappa: bool,
    #[serde(default = "yes")]
    pub learn_lambda: bool,
}

fn yes() -> bool {
    true
}

impl<T: Scalar> ActivationParams<T> {
    /// Learnable parameters, validated.
    pub fn new(kappa: T, lambda: T) -> Result<Self> {
        let p = Self {
            kappa,
            lambda,
            learn_kappa: true,
            learn_lambda: true,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters that stay at their initial values during training.
    pub fn fixed(kappa: T, lambda: T) -> Result<Self> {
        Ok(Self {
            learn_kappa: false,
            learn_lambda: false,
            ..Self::new(kappa, lambda)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() {
            return Err(ApaError::Domain(format!("kappa must be finite, got {}", self.kappa)));
        }
        if !(self.lambda.is_finite() && self.lambda > T::zero()) {
            return Err(ApaError::Domain(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Name of an activation family without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationTag {
    Apa,
    Aglu,
    Relu,
    Sigmoid,
    Gumbel,
    Silu,
    Gelu,
    Prelu,
    Elu,
    Mish,
    Identity,
}

/// An activation function together with whatever parameters it carries.
///
/// APA/AGLU carry a full [`ActivationParams`]; PReLU and ELU carry a single
/// slope `kappa`; the rest are parameter-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Scalar")]
pub enum ActivationKind<T> {
    Apa { params: ActivationParams<T> },
    Aglu { params: ActivationParams<T> },
    Relu,
    Sigmoid,
    Gumbel,
    Silu,
    Gelu,
    Prelu { kappa: T },
    Elu { kappa: T },
    Mish,
    Identity,
}

impl<T: Scalar> ActivationKind<T> {
    /// Assembles a kind from a tag and optional parameters, enforcing which
    /// families require parameters and which forbid them.
    pub fn from_parts(tag: ActivationTag, params: Option<ActivationParams<T>>) -> Result<Self> {
        use ActivationTag as G;
        let need = |p: Option<ActivationParams<T>>| {
            let p = p.ok_or_else(|| ApaError::Domain(format!("{tag:?} requires parameters")))?;
            p.validate()?;
            Ok::<_, ApaError>(p)
        };
        let forbid = |k: ActivationKind<T>| match params {
            Some(_) => Err(ApaError::Domain(format!("{tag:?} takes no parameters"))),
            None => Ok(k),
        };
        match tag {
            G::Apa => Ok(Self::Apa { params: need(params)? }),
            G::Aglu => Ok(Self::Aglu { params: need(params)? }),
            G::Prelu => {
                let kappa = params.ok_or_else(|| ApaError::Domain("prelu requires kappa".into()))?.kappa;
                Ok(Self::Prelu { kappa })
            }
            G::Elu => {
                let kappa = params.ok_or_else(|| ApaError::Domain("elu requires kappa".into()))?.kappa;
                Ok(Self::Elu { kappa })
            }
            G::Relu => forbid(Self::Relu),
            G::Sigmoid => forbid(Self::Sigmoid),
            G::Gumbel => forbid(Self::Gumbel),
            G::Silu => forbid(Self::Silu),
            G::Gelu => forbid(Self::Gelu),
            G::Mish => forbid(Self::Mish),
            G::Identity => forbid(Self::Identity),
        }
    }

    pub fn tag(&self) -> ActivationTag {
        match self {
            Self::Apa { .. } => ActivationTag::Apa,
            Self::Aglu { .. } => ActivationTag::Aglu,
            Self::Relu => ActivationTag::Relu,
            Self::Sigmoid => ActivationTag::Sigmoid,
            Self::Gumbel => ActivationTag::Gumbel,
            Self::Silu => ActivationTag::Silu,
            Self::Gelu => ActivationTag::Gelu,
            Self::Prelu { .. } => ActivationTag::Prelu,
            Self::Elu { .. } => ActivationTag::Elu,
            Self::Mish => ActivationTag::Mish,
            Self::Identity => ActivationTag::Identity,
        }
    }

    /// The adaptive parameters, if this is APA or AGLU.
    pub fn adaptive_params(&self) -> Option<&ActivationParams<T>> {
        match self {
            Self::Apa { params } | Self::Aglu { params } => Some(params),
            _ => None,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        self.adaptive_params().is_some()
    }
}
