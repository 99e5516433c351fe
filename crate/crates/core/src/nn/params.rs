use serde::{Deserialize, Serialize};

use crate::error::{ApaError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamRole {
    Weight,
    Bias,
    Kappa,
    Lambda,
}

#[derive(Debug, Clone)]
struct Entry<T> {
    name: String,
    role: ParamRole,
    value: Tensor<T>,
    trainable: bool,
}

/// Every trainable (or frozen) tensor of a model, addressed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

/// A serializable parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn add(&mut self, name: &str, role: ParamRole, value: Tensor<T>, trainable: bool) -> ParamId {
        self.entries.push(Entry {
            name: name.to_string(),
            role,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn role(&self, id: ParamId) -> ParamRole {
        self.entries[id.0].role
    }

    pub fn trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn snapshot(&self) -> Vec<NamedTensor> {
        self.entries
            .iter()
            .map(|e| NamedTensor {
                name: e.name.clone(),
                rows: e.value.rows(),
                cols: e.value.cols(),
                data: e.value.data().iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect(),
            })
            .collect()
    }

    /// Overwrites values from a snapshot; every stored parameter must appear
    /// with a matching shape.
    pub fn restore(&mut self, snapshot: &[NamedTensor]) -> Result<()> {
        for e in &mut self.entries {
            let s = snapshot
                .iter()
                .find(|s| s.name == e.name)
                .ok_or_else(|| ApaError::Spec(format!("snapshot lacks parameter {}", e.name)))?;
            let data = s
                .data
                .iter()
                .map(|&x| T::from_f64(x).ok_or_else(|| ApaError::Spec(format!("unrepresentable value in {}", s.name))))
                .collect::<Result<Vec<T>>>()?;
            let t = Tensor::from_vec(s.rows, s.cols, data)?;
            t.expect_shape(e.value.shape(), &e.name)?;
            e.value = t;
        }
        Ok(())
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            grads: store
                .entries
                .iter()
                .map(|e| Tensor::zeros(e.value.rows(), e.value.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Tensor<T>) -> Result<()> {
        self.grads[id.0].add_assign(g)
    }

    pub fn max_abs(&self) -> T {
        self.grads.iter().fold(T::zero(), |m, g| m.max(g.max_abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }
}
