//! Seeded synthetic data: long-tailed Gaussian-cluster classification sets and
//! theoretical logit samples.
//!
//! Every generator draws from `ChaCha8Rng::seed_from_u64(seed)` (the
//! `rand_chacha` stream cipher RNG with 8 rounds), so a seed pins the output
//! exactly on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ApaError, Result};
use crate::scalar::{lit, Scalar};
use crate::stats::{EmpiricalDistribution, Family, FittedCdf};
use crate::tensor::Tensor;

/// The generator used for all seeded streams.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Training-frequency bucket of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyGroup {
    Many,
    Medium,
    Few,
}

impl FrequencyGroup {
    pub const ALL: [FrequencyGroup; 3] = [Self::Many, Self::Medium, Self::Few];

    pub fn name(self) -> &'static str {
        match self {
            Self::Many => "many",
            Self::Medium => "medium",
            Self::Few => "few",
        }
    }
}

/// Convention used to split classes into frequency groups.
pub const GROUP_RULE: &str =
    "classes ranked by training size (ties by index); top round((K+1)/3) many, bottom round((K+1)/3) few, rest medium";

/// Assigns groups by size rank following [`GROUP_RULE`].
pub fn assign_groups(sizes: &[usize]) -> Vec<FrequencyGroup> {
    let k = sizes.len();
    let third = ((k + 1) / 3).max(usize::from(k >= 2));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut groups = vec![FrequencyGroup::Medium; k];
    for (rank, &c) in order.iter().enumerate() {
        if rank < third {
            groups[c] = FrequencyGroup::Many;
        } else if rank >= k - third {
            groups[c] = FrequencyGroup::Few;
        }
    }
    groups
}

/// Exponentially imbalanced class profile over Gaussian clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub classes: usize,
    pub dim: usize,
    /// Size of the largest class.
    pub n_max: usize,
    /// Ratio of the largest to the smallest class size.
    pub imbalance: f64,
    /// Standard deviation of the isotropic cluster noise.
    pub spread: f64,
    pub seed: u64,
}

impl LongTailSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(ApaError::Spec("need at least 2 classes".into()));
        }
        if self.dim == 0 || self.n_max == 0 {
            return Err(ApaError::Spec("dimension and n_max must be positive".into()));
        }
        if !(self.imbalance.is_finite() && self.imbalance >= 1.0) {
            return Err(ApaError::Spec(format!("imbalance factor must be >= 1, got {}", self.imbalance)));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(ApaError::Spec(format!("spread must be >= 0, got {}", self.spread)));
        }
        Ok(())
    }

    /// `n_k = round(n_max · IF^(−k/(K−1)))`.
    pub fn class_sizes(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let last = (self.classes - 1) as f64;
        let sizes: Vec<usize> = (0..self.classes)
            .map(|k| (self.n_max as f64 * self.imbalance.powf(-(k as f64) / last)).round() as usize)
            .collect();
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(ApaError::Spec(format!("class {k} rounds to zero samples")));
        }
        Ok(sizes)
    }
}

/// Labelled features with per-class training frequency groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SampledDataset<T> {
    pub features: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Per-class sample counts of the training split.
    pub class_sizes: Vec<usize>,
    pub groups: Vec<FrequencyGroup>,
    pub group_rule: String,
}

impl<T: Scalar> SampledDataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Row indices whose label falls in `group`.
    pub fn indices_in(&self, group: FrequencyGroup) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[self.labels[i]] == group).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            features: Tensor::zeros(0, self.dim()),
            labels: Vec::new(),
            classes: self.classes,
            class_sizes: self.class_sizes.clone(),
            groups: self.groups.clone(),
            group_rule: self.group_rule.clone(),
        }
    }
}

fn unit_centers(rng: &mut SeededRng, k: usize, d: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

fn draw_clusters<T: Scalar>(
    rng: &mut SeededRng,
    centers: &[Vec<f64>],
    sizes: &[usize],
    spread: f64,
) -> (Tensor<T>, Vec<usize>) {
    let d = centers[0].len();
    let n: usize = sizes.iter().sum();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (k, (&size, c)) in sizes.iter().zip(centers).enumerate() {
        for _ in 0..size {
            for &cj in c {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(lit::<T>(cj + spread * noise));
            }
            labels.push(k);
        }
    }
    (Tensor::from_vec(n, d, data).expect("sized buffer"), labels)
}

/// Training split of a long-tailed cluster dataset.
pub fn make_longtail<T: Scalar>(spec: &LongTailSpec) -> Result<SampledDataset<T>> {
    Ok(make_longtail_split(spec, 0)?.0)
}

/// Long-tailed training split plus a balanced test split with
/// `test_per_class` samples per class, drawn around the same centers.
///
/// Stream order: centers, training samples, test samples.
pub fn make_longtail_split<T: Scalar>(
    spec: &LongTailSpec,
    test_per_class: usize,
) -> Result<(SampledDataset<T>, SampledDataset<T>)> {
    let sizes = spec.class_sizes()?;
    let groups = assign_groups(&sizes);
    let mut rng = seeded_rng(spec.seed);
    let centers = unit_centers(&mut rng, spec.classes, spec.dim);
    let (train_x, train_y) = draw_clusters(&mut rng, &centers, &sizes, spec.spread);
    let (test_x, test_y) = draw_clusters(&mut rng, &centers, &vec![test_per_class; spec.classes], spec.spread);
    let make = |features, labels| SampledDataset {
        features,
        labels,
        classes: spec.classes,
        class_sizes: sizes.clone(),
        groups: groups.clone(),
        group_rule: GROUP_RULE.to_string(),
    };
    Ok((make(train_x, train_y), make(test_x, test_y)))
}

/// Inverse-CDF sample of `n` draws from a Logistic or Gumbel distribution.
pub fn sample_theoretical<T: Scalar>(
    family: Family,
    location: T,
    scale: T,
    n: usize,
    seed: u64,
) -> Result<EmpiricalDistribution<T>> {
    let cdf = FittedCdf::new(family, location, scale)?;
    let mut rng = seeded_rng(seed);
    let samples = (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            cdf.quantile(lit::<T>(u))
        })
        .collect();
    EmpiricalDistribution::new(samples)
}
