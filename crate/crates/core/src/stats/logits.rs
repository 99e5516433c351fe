use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::FrequencyGroup;
use crate::scalar::Scalar;
use crate::stats::cdf::{fit_cdf, Family, FittedCdf};
use crate::stats::empirical::EmpiricalDistribution;
use crate::stats::ks::ks_distance;

/// Fitting convention written into every alignment report.
pub const FIT_RULE: &str = "per-class method-of-moments location/scale fit; KS on the exact ECDF";

/// Per-class logit samples `f(z_y)` with an optional frequency-group tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLogitTable<T> {
    classes: Vec<ClassLogits<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassLogits<T> {
    pub samples: Vec<T>,
    pub group: Option<FrequencyGroup>,
}

impl<T: Scalar> ClassLogitTable<T> {
    pub fn new(classes: Vec<ClassLogits<T>>) -> Self {
        Self { classes }
    }

    /// Table from raw per-class samples without group tags.
    pub fn from_samples(per_class: Vec<Vec<T>>) -> Self {
        Self::new(
            per_class
                .into_iter()
                .map(|samples| ClassLogits { samples, group: None })
                .collect(),
        )
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[ClassLogits<T>] {
        &self.classes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit {
    pub location: f64,
    pub scale: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAlignment {
    pub class: usize,
    pub group: Option<FrequencyGroup>,
    pub n: usize,
    /// Reason the class was excluded, if it was.
    pub skipped: Option<String>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub skewness: Option<f64>,
    pub logistic: Option<FamilyFit>,
    pub gumbel: Option<FamilyFit>,
    pub winner: Option<Family>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub fit_rule: String,
    pub class_count: usize,
    pub evaluated: usize,
    pub skipped: usize,
    /// Fraction of evaluated classes whose Gumbel KS distance is strictly
    /// smaller; `None` when every class was skipped.
    pub gumbel_fraction: Option<f64>,
    pub classes: Vec<ClassAlignment>,
}

fn summary<T: Scalar>(cdf: &FittedCdf<T>, ks: T) -> FamilyFit {
    FamilyFit {
        location: cdf.location.to_f64().unwrap_or(f64::NAN),
        scale: cdf.scale.to_f64().unwrap_or(f64::NAN),
        ks: ks.to_f64().unwrap_or(f64::NAN),
    }
}

fn align_class<T: Scalar>(class: usize, c: &ClassLogits<T>) -> ClassAlignment {
    let mut out = ClassAlignment {
        class,
        group: c.group,
        n: c.samples.len(),
        skipped: None,
        mean: None,
        std: None,
        skewness: None,
        logistic: None,
        gumbel: None,
        winner: None,
    };
    let dist = match EmpiricalDistribution::new(c.samples.clone()) {
        Ok(d) => d,
        Err(e) => {
            out.skipped = Some(e.to_string());
            return out;
        }
    };
    out.mean = dist.mean().to_f64();
    out.std = dist.std().to_f64();
    out.skewness = dist.skewness().to_f64();
    let fits = fit_cdf(&dist, Family::Logistic).and_then(|l| Ok((l, fit_cdf(&dist, Family::Gumbel)?)));
    match fits {
        Ok((l, g)) => {
            let kl = ks_distance(&dist, &l);
            let kg = ks_distance(&dist, &g);
            out.logistic = Some(summary(&l, kl));
            out.gumbel = Some(summary(&g, kg));
            out.winner = Some(if kg < kl { Family::Gumbel } else { Family::Logistic });
        }
        Err(e) => out.skipped = Some(e.to_string()),
    }
    out
}

/// Fits both families to every class, compares KS distances, and aggregates
/// the fraction of classes closer to Gumbel.
///
/// Classes are evaluated in parallel; results stay in class order. Classes
/// with fewer than two samples or zero variance are reported as skipped.
pub fn logit_alignment_report<T: Scalar>(table: &ClassLogitTable<T>) -> AlignmentReport {
    let classes: Vec<ClassAlignment> = table
        .classes
        .par_iter()
        .enumerate()
        .map(|(k, c)| align_class(k, c))
        .collect();
    let evaluated = classes.iter().filter(|c| c.winner.is_some()).count();
    let gumbel = classes
        .iter()
        .filter(|c| c.winner == Some(Family::Gumbel))
        .count();
    AlignmentReport {
        fit_rule: FIT_RULE.to_string(),
        class_count: classes.len(),
        evaluated,
        skipped: classes.len() - evaluated,
        gumbel_fraction: (evaluated > 0).then(|| gumbel as f64 / evaluated as f64),
        classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::sample_theoretical;

    fn draws(family: Family, seed: u64, n: usize) -> Vec<f64> {
        sample_theoretical::<f64>(family, 0.0, 1.0, n, seed)
            .unwrap()
            .samples()
            .to_vec()
    }

    #[test]
    fn gumbel_table_is_gumbel_closer() {
        let table = ClassLogitTable::from_samples((0..20).map(|s| draws(Family::Gumbel, s, 5000)).collect());
        let r = logit_alignment_report(&table);
        assert!(r.gumbel_fraction.unwrap() >= 0.95, "{:?}", r.gumbel_fraction);
    }

    #[test]
    fn single_logistic_class() {
        let table = ClassLogitTable::from_samples(vec![draws(Family::Logistic, 9, 5000)]);
        let r = logit_alignment_report(&table);
        assert_eq!(r.classes[0].winner, Some(Family::Logistic));
    }

    #[test]
    fn short_and_constant_classes_are_skipped() {
        let table = ClassLogitTable::from_samples(vec![
            vec![],
            vec![1.0, 1.0, 1.0],
            draws(Family::Gumbel, 1, 4000),
        ]);
        let r = logit_alignment_report(&table);
        assert_eq!(r.skipped, 2);
        assert_eq!(r.evaluated, 1);
        assert!(r.classes[0].skipped.is_some() && r.classes[1].skipped.is_some());
        assert_eq!(r.gumbel_fraction, Some(1.0));
    }

    #[test]
    fn all_skipped_has_no_fraction() {
        let r = logit_alignment_report(&ClassLogitTable::from_samples(vec![vec![0.5f64], vec![]]));
        assert_eq!(r.gumbel_fraction, None);
    }
}
