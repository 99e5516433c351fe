use serde::{Deserialize, Serialize};

use crate::error::{ApaError, Result};
use crate::scalar::{lit, sigmoid, Scalar};
use crate::stats::empirical::EmpiricalDistribution;

/// Theoretical noise families compared against logit samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    Gumbel,
}

/// A location–scale distribution from [`Family`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FittedCdf<T> {
    pub family: Family,
    pub location: T,
    pub scale: T,
}

impl<T: Scalar> FittedCdf<T> {
    pub fn new(family: Family, location: T, scale: T) -> Result<Self> {
        if !location.is_finite() || !scale.is_finite() || scale <= T::zero() {
            return Err(ApaError::Domain(format!(
                "invalid {family:?} parameters: location {location}, scale {scale}"
            )));
        }
        Ok(Self {
            family,
            location,
            scale,
        })
    }

    pub fn standard(family: Family) -> Self {
        Self {
            family,
            location: T::zero(),
            scale: T::one(),
        }
    }

    pub fn cdf(&self, x: T) -> T {
        let t = (x - self.location) / self.scale;
        match self.family {
            Family::Logistic => sigmoid(t),
            Family::Gumbel => (-(-t).exp()).exp(),
        }
    }

    /// Inverse CDF for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: T) -> T {
        match self.family {
            Family::Logistic => self.location + self.scale * (u / (T::one() - u)).ln(),
            Family::Gumbel => self.location - self.scale * (-u.ln()).ln(),
        }
    }

    pub fn mean(&self) -> T {
        match self.family {
            Family::Logistic => self.location,
            Family::Gumbel => self.location + T::euler_gamma() * self.scale,
        }
    }

    pub fn std(&self) -> T {
        let pi = T::PI();
        match self.family {
            Family::Logistic => self.scale * pi / lit::<T>(3.0).sqrt(),
            Family::Gumbel => self.scale * pi / lit::<T>(6.0).sqrt(),
        }
    }
}

/// Method-of-moments fit of `family` to the sample mean and standard deviation.
pub fn fit_cdf<T: Scalar>(dist: &EmpiricalDistribution<T>, family: Family) -> Result<FittedCdf<T>> {
    let std = dist.std();
    if !(std > T::zero()) {
        return Err(ApaError::Degenerate(format!(
            "{} samples with zero variance",
            dist.n()
        )));
    }
    let pi = T::PI();
    match family {
        Family::Logistic => FittedCdf::new(family, dist.mean(), std * lit::<T>(3.0).sqrt() / pi),
        Family::Gumbel => {
            let scale = std * lit::<T>(6.0).sqrt() / pi;
            FittedCdf::new(family, dist.mean() - T::euler_gamma() * scale, scale)
        }
    }
}
