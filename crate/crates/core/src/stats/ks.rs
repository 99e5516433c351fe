use crate::scalar::{count, Scalar};
use crate::stats::cdf::FittedCdf;
use crate::stats::empirical::EmpiricalDistribution;

/// One-sample Kolmogorov–Smirnov statistic
/// `sup_i max(|i/n − F(x₍ᵢ₎)|, |F(x₍ᵢ₎) − (i−1)/n|)` on the exact ECDF.
pub fn ks_distance<T: Scalar>(dist: &EmpiricalDistribution<T>, cdf: &FittedCdf<T>) -> T {
    let n: T = count(dist.n());
    dist.samples()
        .iter()
        .enumerate()
        .fold(T::zero(), |d, (i, &x)| {
            let f = cdf.cdf(x);
            let above = (count::<T>(i + 1) / n - f).abs();
            let below = (f - count::<T>(i) / n).abs();
            d.max(above).max(below)
        })
}
