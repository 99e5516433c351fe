use std::cmp::Ordering;

use crate::error::{ApaError, Result};
use crate::scalar::{count, Scalar};

/// A sorted sample with cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution<T> {
    samples: Vec<T>,
    mean: T,
    std: T,
    skewness: T,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    /// Sorts the samples and caches mean, sample standard deviation (n − 1
    /// denominator) and the standardized third moment.
    ///
    /// Requires at least two finite samples.
    pub fn new(mut samples: Vec<T>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(ApaError::Domain(format!(
                "an empirical distribution needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(ApaError::Domain(format!("non-finite sample {bad}")));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));

        let n: T = count(samples.len());
        let mean = samples.iter().copied().sum::<T>() / n;
        let (m2, m3) = samples.iter().fold((T::zero(), T::zero()), |(m2, m3), &x| {
            let d = x - mean;
            (m2 + d * d, m3 + d * d * d)
        });
        let std = (m2 / (n - T::one())).sqrt();
        let pop_var = m2 / n;
        let skewness = if pop_var > T::zero() {
            (m3 / n) / pop_var.powf(T::from_f64(1.5).unwrap())
        } else {
            T::zero()
        };
        Ok(Self {
            samples,
            mean,
            std,
            skewness,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn std(&self) -> T {
        self.std
    }

    pub fn skewness(&self) -> T {
        self.skewness
    }

    pub fn min(&self) -> T {
        self.samples[0]
    }

    pub fn max(&self) -> T {
        self.samples[self.samples.len() - 1]
    }
}
