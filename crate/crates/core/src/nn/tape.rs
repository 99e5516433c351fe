//! A tensor-valued reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards
//! visits every node after all of its consumers.

use crate::activation::{activate_with_grad, ActivationKind, ActivationParams};
use crate::error::Result;
use crate::nn::params::{ParamGrads, ParamId, ParamStore};
use crate::scalar::{count, lit, Scalar};
use crate::tensor::Tensor;

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(ParamId),
    /// `x · Wᵀ + b`
    Linear { x: NodeId, w: NodeId, b: NodeId },
    /// Elementwise activation; the cached tensors hold `∂y/∂x`, `∂y/∂κ`, `∂y/∂λ`.
    Activate {
        x: NodeId,
        kappa: Option<NodeId>,
        lambda: Option<NodeId>,
        d_input: Tensor<T>,
        d_kappa: Tensor<T>,
        d_lambda: Tensor<T>,
    },
    Mul { a: NodeId, b: NodeId },
    /// Row-wise standardization; caches `1/σ` per row.
    LayerNorm { x: NodeId, inv_std: Vec<T> },
    /// Multiplication by a constant mask.
    Mask { x: NodeId, mask: Tensor<T> },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Adaptive parameters bound to tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub kappa: NodeId,
    pub lambda: NodeId,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, what: &str) -> Result<NodeId> {
        value.ensure_finite(what)?;
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, x: Tensor<T>) -> Result<NodeId> {
        self.push(x, Op::Input, "input")
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<NodeId> {
        self.push(store.value(id).clone(), Op::Param(id), store.name(id))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let mut y = self.value(x).matmul_t(self.value(w))?;
        let bias = self.value(b);
        bias.expect_shape((1, y.cols()), "bias")?;
        for i in 0..y.rows() {
            for (v, &bj) in y.row_mut(i).iter_mut().zip(bias.data()) {
                *v = *v + bj;
            }
        }
        self.push(y, Op::Linear { x, w, b }, "linear output")
    }

    /// Applies `kind` elementwise. For adaptive kinds `bound` supplies the
    /// nodes holding κ and λ, whose current values override those in `kind`.
    pub fn activate(&mut self, x: NodeId, kind: &ActivationKind<T>, bound: Option<BoundParams>) -> Result<NodeId> {
        let kind = match (kind, bound) {
            (ActivationKind::Apa { params } | ActivationKind::Aglu { params }, Some(b)) => {
                let p = ActivationParams {
                    kappa: self.value(b.kappa).item(),
                    lambda: self.value(b.lambda).item(),
                    ..*params
                };
                if matches!(kind, ActivationKind::Apa { .. }) {
                    ActivationKind::Apa { params: p }
                } else {
                    ActivationKind::Aglu { params: p }
                }
            }
            (k, _) => *k,
        };
        let xv = self.value(x);
        let (r, c) = xv.shape();
        let mut y = Tensor::zeros(r, c);
        let mut d_input = Tensor::zeros(r, c);
        let mut d_kappa = Tensor::zeros(r, c);
        let mut d_lambda = Tensor::zeros(r, c);
        for (i, &z) in xv.data().iter().enumerate() {
            let (v, di, dk, dl) = activate_with_grad(&kind, z)?;
            y.data_mut()[i] = v;
            d_input.data_mut()[i] = di;
            d_kappa.data_mut()[i] = dk;
            d_lambda.data_mut()[i] = dl;
        }
        let op = Op::Activate {
            x,
            kappa: bound.map(|b| b.kappa),
            lambda: bound.map(|b| b.lambda),
            d_input,
            d_kappa,
            d_lambda,
        };
        self.push(y, op, "activation output")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        self.push(y, Op::Mul { a, b }, "product")
    }

    pub fn layer_norm(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (r, c) = xv.shape();
        let n: T = count(c);
        let eps: T = lit(LAYER_NORM_EPS);
        let mut y = Tensor::zeros(r, c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let s = T::one() / (var + eps).sqrt();
            for (o, &v) in y.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            inv_std.push(s);
        }
        self.push(y, Op::LayerNorm { x, inv_std }, "layer norm")
    }

    pub fn mask(&mut self, x: NodeId, mask: Tensor<T>) -> Result<NodeId> {
        let y = self.value(x).zip_map(&mask, |p, q| p * q)?;
        self.push(y, Op::Mask { x, mask }, "masked output")
    }

    /// Propagates `seed = ∂L/∂out` back through the tape and returns the
    /// gradient of every parameter leaf, summed over repeated uses.
    pub fn backward(&self, out: NodeId, seed: &Tensor<T>, store: &ParamStore<T>) -> Result<ParamGrads<T>> {
        seed.expect_shape(self.value(out).shape(), "loss gradient")?;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed.clone());
        let mut result = ParamGrads::zeros_like(store);

        fn acc<T: Scalar>(g: &mut [Option<Tensor<T>>], id: NodeId, t: Tensor<T>) -> Result<()> {
            match &mut g[id.0] {
                Some(e) => e.add_assign(&t),
                slot => {
                    *slot = Some(t);
                    Ok(())
                }
            }
        }

        for idx in (0..=out.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(pid) => result.accumulate(*pid, &gy)?,
                Op::Linear { x, w, b } => {
                    acc(&mut grads, *x, gy.matmul(self.value(*w))?)?;
                    acc(&mut grads, *w, gy.t_matmul(self.value(*x))?)?;
                    acc(&mut grads, *b, gy.sum_rows())?;
                }
                Op::Activate {
                    x,
                    kappa,
                    lambda,
                    d_input,
                    d_kappa,
                    d_lambda,
                } => {
                    acc(&mut grads, *x, gy.zip_map(d_input, |g, d| g * d)?)?;
                    if let Some(k) = kappa {
                        let s = gy.data().iter().zip(d_kappa.data()).map(|(&g, &d)| g * d).sum();
                        acc(&mut grads, *k, Tensor::scalar(s))?;
                    }
                    if let Some(l) = lambda {
                        let s = gy.data().iter().zip(d_lambda.data()).map(|(&g, &d)| g * d).sum();
                        acc(&mut grads, *l, Tensor::scalar(s))?;
                    }
                }
                Op::Mul { a, b } => {
                    acc(&mut grads, *a, gy.zip_map(self.value(*b), |g, v| g * v)?)?;
                    acc(&mut grads, *b, gy.zip_map(self.value(*a), |g, v| g * v)?)?;
                }
                Op::LayerNorm { x, inv_std } => {
                    let y = &self.nodes[idx].value;
                    let c = y.cols();
                    let n: T = count(c);
                    let mut gx = Tensor::zeros(y.rows(), c);
                    for i in 0..y.rows() {
                        let gr = gy.row(i);
                        let yr = y.row(i);
                        let mean_g = gr.iter().copied().sum::<T>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(&g, &v)| g * v).sum::<T>() / n;
                        for j in 0..c {
                            gx[(i, j)] = inv_std[i] * (gr[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                    acc(&mut grads, *x, gx)?;
                }
                Op::Mask { x, mask } => acc(&mut grads, *x, gy.zip_map(mask, |g, m| g * m)?)?,
            }
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamRole;
    use crate::error::ApaError;

    #[test]
    fn linear_backward_shapes_and_values() {
        let mut store = ParamStore::<f64>::default();
        let w = store.add("w", ParamRole::Weight, Tensor::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap(), true);
        let b = store.add("b", ParamRole::Bias, Tensor::from_vec(1, 2, vec![0.5, -0.5]).unwrap(), true);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::from_vec(1, 3, vec![1., 0., -1.]).unwrap()).unwrap();
        let wn = tape.param(&store, w).unwrap();
        let bn = tape.param(&store, b).unwrap();
        let y = tape.linear(x, wn, bn).unwrap();
        assert_eq!(tape.value(y).data(), &[-1.5, -2.5]);
        let g = tape.backward(y, &Tensor::from_vec(1, 2, vec![1., 2.]).unwrap(), &store).unwrap();
        assert_eq!(g.get(w).data(), &[1., 0., -1., 2., 0., -2.]);
        assert_eq!(g.get(b).data(), &[1., 2.]);
    }

    #[test]
    fn layer_norm_gradient_matches_difference() {
        let xs = vec![0.3, -1.2, 2.0, 0.7];
        let weights = Tensor::from_vec(1, 4, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let run = |xs: &[f64]| {
            let mut store = ParamStore::default();
            let p = store.add("x", ParamRole::Weight, Tensor::from_vec(1, 4, xs.to_vec()).unwrap(), true);
            let mut t = Tape::new();
            let x = t.param(&store, p).unwrap();
            let y = t.layer_norm(x).unwrap();
            let loss: f64 = t.value(y).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
            let g = t.backward(y, &weights, &store).unwrap();
            (loss, g.get(p).clone())
        };
        let (_, analytic) = run(&xs);
        for j in 0..4 {
            let h = 1e-6;
            let mut p = xs.clone();
            let mut m = xs.clone();
            p[j] += h;
            m[j] -= h;
            let fd = (run(&p).0 - run(&m).0) / (2.0 * h);
            assert!((analytic.data()[j] - fd).abs() < 1e-7, "{} vs {fd}", analytic.data()[j]);
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut tape = Tape::<f64>::new();
        assert!(matches!(
            tape.input(Tensor::from_vec(1, 1, vec![f64::NAN]).unwrap()),
            Err(ApaError::NonFinite(_))
        ));
    }
}
