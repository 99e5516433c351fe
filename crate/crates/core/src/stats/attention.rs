use serde::{Deserialize, Serialize};

use crate::error::{ApaError, Result};
use crate::scalar::{count, lit, Scalar};
use crate::tensor::Tensor;

/// Gates are clamped to `[GATE_CLAMP, 1 − GATE_CLAMP]` before taking logs.
pub const GATE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    /// Maximum per-channel entropy is exactly 1.
    #[default]
    Two,
    Natural,
}

/// Mean binary entropy of channel-attention gates,
/// `−(1/C)·Σ [a·log a + (1−a)·log(1−a)]`.
///
/// A batch of gates (`n × C`) is averaged over every element, which equals the
/// per-sample layer entropy averaged over the batch.
pub fn attention_entropy<T: Scalar>(attn: &Tensor<T>, base: LogBase) -> Result<T> {
    if attn.is_empty() {
        return Err(ApaError::Domain("attention entropy of an empty tensor".into()));
    }
    let lo: T = lit(GATE_CLAMP);
    let hi = T::one() - lo;
    let mut total = T::zero();
    for &a in attn.data() {
        if !(a >= T::zero() && a <= T::one()) {
            return Err(ApaError::Domain(format!("gate value {a} outside [0, 1]")));
        }
        let a = a.max(lo).min(hi);
        let b = T::one() - a;
        total = total - (a * a.ln() + b * b.ln());
    }
    let mut e = total / count(attn.len());
    if base == LogBase::Two {
        e = e / T::LN_2();
    }
    Ok(e)
}

/// Population variance of gate values for each layer.
pub fn attention_variance<T: Scalar>(attn_per_layer: &[Tensor<T>]) -> Result<Vec<T>> {
    if attn_per_layer.is_empty() {
        return Err(ApaError::Domain("no attention layers".into()));
    }
    attn_per_layer
        .iter()
        .map(|t| {
            if t.is_empty() {
                return Err(ApaError::Domain("empty attention layer".into()));
            }
            let n: T = count(t.len());
            let mean = t.sum() / n;
            Ok(t.data().iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n)
        })
        .collect()
}
