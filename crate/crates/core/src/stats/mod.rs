//! Distribution fitting, KS alignment, channel-attention entropy and neural
//! collapse.

mod attention;
mod cdf;
mod collapse;
mod empirical;
mod ks;
mod logits;

pub use attention::{attention_entropy, attention_variance, LogBase, GATE_CLAMP};
pub use cdf::{fit_cdf, Family, FittedCdf};
pub use collapse::{covariances, nc1, symmetric_eigen, symmetric_pinv, CovariancePair, PINV_RELATIVE_CUTOFF};
pub use empirical::EmpiricalDistribution;
pub use ks::ks_distance;
pub use logits::{
    logit_alignment_report, AlignmentReport, ClassAlignment, ClassLogitTable, ClassLogits, FamilyFit, FIT_RULE,
};
