use serde::{Deserialize, Serialize};

use crate::error::{ApaError, Result};
use crate::scalar::{count, sigmoid, softplus, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    SoftmaxCe,
    /// Per-class binary cross-entropy against one-hot targets.
    SigmoidBce,
}

fn check<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() || logits.rows() == 0 {
        return Err(ApaError::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(ApaError::Domain(format!("label {y} out of range for {} classes", logits.cols())));
    }
    Ok(())
}

/// Batch-mean loss and its gradient with respect to the logits.
pub fn loss_and_grad<T: Scalar>(kind: LossKind, logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    check(logits, labels)?;
    let n: T = count(labels.len());
    let mut grad = Tensor::zeros(logits.rows(), logits.cols());
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let g = grad.row_mut(i);
        match kind {
            LossKind::SoftmaxCe => {
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let z: T = row.iter().map(|&v| (v - m).exp()).sum();
                let lse = m + z.ln();
                total = total + lse - row[y];
                for (j, (gj, &v)) in g.iter_mut().zip(row).enumerate() {
                    let p = (v - lse).exp();
                    *gj = (if j == y { p - T::one() } else { p }) / n;
                }
            }
            LossKind::SigmoidBce => {
                for (j, (gj, &v)) in g.iter_mut().zip(row).enumerate() {
                    let t = if j == y { T::one() } else { T::zero() };
                    total = total + softplus(v) - t * v;
                    *gj = (sigmoid(v) - t) / n;
                }
            }
        }
    }
    Ok((total / n, grad))
}
