use crate::error::Result;
use crate::nn::params::{ParamGrads, ParamRole, ParamStore};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// SGD with heavy-ball momentum: `v ← μv + g`, `θ ← θ − ηv`.
///
/// After every step each λ parameter is clamped into `lambda_bounds`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub lambda_bounds: (T, T),
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64, lambda_bounds: (f64, f64)) -> Self {
        Self {
            learning_rate: lit(learning_rate),
            momentum: lit(momentum),
            lambda_bounds: (lit(lambda_bounds.0), lit(lambda_bounds.1)),
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &ParamGrads<T>) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = store
                .ids()
                .map(|id| Tensor::zeros(store.value(id).rows(), store.value(id).cols()))
                .collect();
        }
        let (lo, hi) = self.lambda_bounds;
        for id in store.ids().collect::<Vec<_>>() {
            if !store.trainable(id) {
                continue;
            }
            let v = &mut self.velocity[id.0];
            for (vi, &gi) in v.data_mut().iter_mut().zip(grads.get(id).data()) {
                *vi = self.momentum * *vi + gi;
            }
            let lr = self.learning_rate;
            let is_lambda = store.role(id) == ParamRole::Lambda;
            for (p, &vi) in store.value_mut(id).data_mut().iter_mut().zip(v.data()) {
                *p = *p - lr * vi;
                if is_lambda {
                    *p = p.max(lo).min(hi);
                }
            }
        }
        Ok(())
    }
}
