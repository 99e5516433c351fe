//! Dense classifiers with optional channel-attention blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind, ActivationParams};
use crate::datagen::{seeded_rng, SeededRng};
use crate::error::{ApaError, Result};
use crate::nn::params::{NamedTensor, ParamGrads, ParamId, ParamRole, ParamStore};
use crate::nn::tape::{BoundParams, NodeId, Tape};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Relu,
    Silu,
    /// Learnable AGLU, κ and λ shared across the layer.
    Aglu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Sigmoid,
    /// Learnable APA, κ and λ shared across the gate.
    Apa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSpec {
    /// Bottleneck ratio `r` of the reduction MLP (`C → C/r → C`).
    pub reduction: usize,
    pub gate: GateKind,
    /// Dropout probability applied to the gate vector during training.
    #[serde(default)]
    pub dropout: f64,
    /// Layer-normalize the pooled descriptor before the reduction MLP.
    #[serde(default)]
    pub layer_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    #[serde(default)]
    pub attention: Option<AttentionSpec>,
}

/// Uniform initialization ranges `(low, high)` for adaptive parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub aglu_kappa: (f64, f64),
    pub aglu_lambda: (f64, f64),
    pub gate_kappa: (f64, f64),
    pub gate_lambda: (f64, f64),
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            aglu_kappa: (0.8, 1.2),
            aglu_lambda: (1e-4, 1.0),
            gate_kappa: (-1.0, 0.0),
            gate_lambda: (1e-4, 1.0),
        }
    }
}

/// Evaluation mode; training mode draws dropout masks from the given stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SeededRng),
}

#[derive(Debug, Clone)]
enum Site<T> {
    Fixed(ActivationKind<T>),
    Adaptive {
        kind: ActivationKind<T>,
        kappa: ParamId,
        lambda: ParamId,
    },
}

#[derive(Debug, Clone)]
struct Dense<T> {
    name: String,
    weight: ParamId,
    bias: ParamId,
    site: Site<T>,
}

impl<T: Scalar> Dense<T> {
    fn new(store: &mut ParamStore<T>, name: &str, weight: Tensor<T>, activation: ActivationKind<T>) -> Self {
        let out = weight.rows();
        let weight = store.add(&format!("{name}.weight"), ParamRole::Weight, weight, true);
        let bias = store.add(&format!("{name}.bias"), ParamRole::Bias, Tensor::zeros(1, out), true);
        let site = match activation.adaptive_params() {
            Some(p) => Site::Adaptive {
                kind: activation,
                kappa: store.add(
                    &format!("{name}.act.kappa"),
                    ParamRole::Kappa,
                    Tensor::scalar(p.kappa),
                    p.learn_kappa,
                ),
                lambda: store.add(
                    &format!("{name}.act.lambda"),
                    ParamRole::Lambda,
                    Tensor::scalar(p.lambda),
                    p.learn_lambda,
                ),
            },
            None => Site::Fixed(activation),
        };
        Self {
            name: name.to_string(),
            weight,
            bias,
            site,
        }
    }

    fn forward(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId) -> Result<NodeId> {
        let w = tape.param(store, self.weight)?;
        let b = tape.param(store, self.bias)?;
        let z = tape.linear(x, w, b)?;
        match &self.site {
            Site::Fixed(ActivationKind::Identity) => Ok(z),
            Site::Fixed(kind) => tape.activate(z, kind, None),
            Site::Adaptive { kind, kappa, lambda } => {
                let bound = BoundParams {
                    kappa: tape.param(store, *kappa)?,
                    lambda: tape.param(store, *lambda)?,
                };
                tape.activate(z, kind, Some(bound))
            }
        }
    }
}

/// Squeeze-and-excitation style gating `X' = gate(MLP(GAP(X))) ⊙ X`.
///
/// Inputs are `n × C` feature rows, so global average pooling over spatial
/// positions is the identity and the descriptor is the row itself.
#[derive(Debug, Clone)]
struct ChannelAttentionBlock<T> {
    reduce: Dense<T>,
    expand: Dense<T>,
    dropout: f64,
    layer_norm: bool,
}

impl<T: Scalar> ChannelAttentionBlock<T> {
    /// Returns the gated output and the (pre-dropout) gate node.
    fn forward(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: NodeId,
        mode: &mut Mode<'_>,
    ) -> Result<(NodeId, NodeId)> {
        let pooled = x;
        let desc = if self.layer_norm { tape.layer_norm(pooled)? } else { pooled };
        let hidden = self.reduce.forward(tape, store, desc)?;
        let gates = self.expand.forward(tape, store, hidden)?;
        let applied = match mode {
            Mode::Train(rng) if self.dropout > 0.0 => {
                let (r, c) = tape.value(gates).shape();
                let keep = 1.0 - self.dropout;
                let scale: T = lit(1.0 / keep);
                let mask = (0..r * c)
                    .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                    .collect();
                tape.mask(gates, Tensor::from_vec(r, c, mask)?)?
            }
            _ => gates,
        };
        Ok((tape.mul(applied, x)?, gates))
    }
}

#[derive(Debug, Clone)]
struct Stage<T> {
    dense: Dense<T>,
    attention: Option<ChannelAttentionBlock<T>>,
}

#[derive(Debug, Clone)]
struct Recording<T> {
    tape: Tape<T>,
    logits: NodeId,
}

/// Logits plus the intermediate signals used by the diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Inspection<T> {
    pub logits: Tensor<T>,
    /// Gate values of every attention block, in stage order.
    pub gates: Vec<Tensor<T>>,
    /// Penultimate features (input of the classification head).
    pub features: Tensor<T>,
}

/// Current value of one learnable activation site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteValue {
    pub site: String,
    pub kappa: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    store: ParamStore<T>,
    stages: Vec<Stage<T>>,
    head: Dense<T>,
    input_dim: usize,
    recording: Option<Recording<T>>,
}

fn glorot<T: Scalar>(rng: &mut SeededRng, fan_out: usize, fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| lit::<T>(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::from_vec(fan_out, fan_in, data).expect("sized buffer")
}

fn uniform_pair<T: Scalar>(rng: &mut SeededRng, kappa: (f64, f64), lambda: (f64, f64)) -> Result<ActivationParams<T>> {
    let draw = |rng: &mut SeededRng, (lo, hi): (f64, f64)| -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ApaError::Spec(format!("invalid init range ({lo}, {hi})")));
        }
        Ok(if lo == hi { lo } else { rng.gen_range(lo..hi) })
    };
    let k = draw(rng, kappa)?;
    let l = draw(rng, lambda)?;
    ActivationParams::new(lit(k), lit(l))
}

/// Offset separating the activation-parameter stream from the weight stream,
/// so networks that differ only in activation type share their weights.
const ACTIVATION_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

impl<T: Scalar> Network<T> {
    /// Builds a classifier `input → hidden stages → linear head` with
    /// Glorot-uniform weights and zero biases. Adaptive parameters are drawn
    /// from `init` using a stream independent of the weights.
    pub fn build(spec: &ModelSpec, input_dim: usize, classes: usize, init: &InitConfig, seed: u64) -> Result<Self> {
        if input_dim == 0 || classes == 0 {
            return Err(ApaError::Spec("input dimension and class count must be positive".into()));
        }
        let mut wrng = seeded_rng(seed);
        let mut arng = seeded_rng(seed ^ ACTIVATION_STREAM);
        let mut store = ParamStore::default();
        let mut stages = Vec::with_capacity(spec.hidden.len());
        let mut width = input_dim;
        for (i, &h) in spec.hidden.iter().enumerate() {
            if h == 0 {
                return Err(ApaError::Spec(format!("hidden layer {i} has zero width")));
            }
            let act_params = uniform_pair::<T>(&mut arng, init.aglu_kappa, init.aglu_lambda)?;
            let gate_params = uniform_pair::<T>(&mut arng, init.gate_kappa, init.gate_lambda)?;
            let act = match spec.hidden_activation {
                HiddenActivation::Relu => ActivationKind::Relu,
                HiddenActivation::Silu => ActivationKind::Silu,
                HiddenActivation::Aglu => ActivationKind::Aglu { params: act_params },
            };
            let dense = Dense::new(&mut store, &format!("stage{i}"), glorot(&mut wrng, h, width), act);
            let attention = match &spec.attention {
                None => None,
                Some(a) => {
                    if a.reduction == 0 || h % a.reduction != 0 {
                        return Err(ApaError::Spec(format!(
                            "width {h} of stage {i} is not divisible by reduction {}",
                            a.reduction
                        )));
                    }
                    if !(0.0..1.0).contains(&a.dropout) {
                        return Err(ApaError::Spec(format!("dropout must be in [0, 1), got {}", a.dropout)));
                    }
                    let b = h / a.reduction;
                    let gate = match a.gate {
                        GateKind::Sigmoid => ActivationKind::Sigmoid,
                        GateKind::Apa => ActivationKind::Apa { params: gate_params },
                    };
                    let reduce = Dense::new(
                        &mut store,
                        &format!("stage{i}.attn.reduce"),
                        glorot(&mut wrng, b, h),
                        ActivationKind::Relu,
                    );
                    let expand = Dense::new(&mut store, &format!("stage{i}.attn.gate"), glorot(&mut wrng, h, b), gate);
                    Some(ChannelAttentionBlock {
                        reduce,
                        expand,
                        dropout: a.dropout,
                        layer_norm: a.layer_norm,
                    })
                }
            };
            stages.push(Stage { dense, attention });
            width = h;
        }
        let head = Dense::new(&mut store, "head", glorot(&mut wrng, classes, width), ActivationKind::Identity);
        Ok(Self {
            store,
            stages,
            head,
            input_dim,
            recording: None,
        })
    }

    /// A single dense layer `y = act(x·Wᵀ + b)` with zero weights.
    pub fn linear(input_dim: usize, outputs: usize, activation: ActivationKind<T>) -> Self {
        let mut store = ParamStore::default();
        let head = Dense::new(&mut store, "head", Tensor::zeros(outputs, input_dim), activation);
        Self {
            store,
            stages: Vec::new(),
            head,
            input_dim,
            recording: None,
        }
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn attention_layers(&self) -> usize {
        self.stages.iter().filter(|s| s.attention.is_some()).count()
    }

    pub fn set_param(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let id = self
            .store
            .find(name)
            .ok_or_else(|| ApaError::Spec(format!("no parameter named {name}")))?;
        value.expect_shape(self.store.value(id).shape(), name)?;
        *self.store.value_mut(id) = value;
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<NamedTensor> {
        self.store.snapshot()
    }

    pub fn restore(&mut self, snapshot: &[NamedTensor]) -> Result<()> {
        self.recording = None;
        self.store.restore(snapshot)
    }

    /// κ and λ of every adaptive site, in parameter order.
    pub fn adaptive_sites(&self) -> Vec<SiteValue> {
        let dense = self
            .stages
            .iter()
            .flat_map(|s| {
                std::iter::once(&s.dense).chain(s.attention.iter().flat_map(|a| [&a.reduce, &a.expand]))
            })
            .chain(std::iter::once(&self.head));
        dense
            .filter_map(|d| match d.site {
                Site::Adaptive { kappa, lambda, .. } => Some(SiteValue {
                    site: format!("{}.act", d.name),
                    kappa: self.store.value(kappa).item().to_f64().unwrap_or(f64::NAN),
                    lambda: self.store.value(lambda).item().to_f64().unwrap_or(f64::NAN),
                }),
                Site::Fixed(_) => None,
            })
            .collect()
    }

    fn run(&self, x: &Tensor<T>, mut mode: Mode<'_>) -> Result<(Tape<T>, NodeId, Vec<NodeId>, NodeId)> {
        if x.cols() != self.input_dim {
            return Err(ApaError::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim
            )));
        }
        let mut tape = Tape::new();
        let mut h = tape.input(x.clone())?;
        let mut gates = Vec::new();
        for stage in &self.stages {
            h = stage.dense.forward(&mut tape, &self.store, h)?;
            if let Some(att) = &stage.attention {
                let (out, g) = att.forward(&mut tape, &self.store, h, &mut mode)?;
                h = out;
                gates.push(g);
            }
        }
        let logits = self.head.forward(&mut tape, &self.store, h)?;
        Ok((tape, logits, gates, h))
    }

    /// Forward pass that records the tape for a later [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode<'_>) -> Result<Tensor<T>> {
        self.recording = None;
        let (tape, logits, _, _) = self.run(x, mode)?;
        let out = tape.value(logits).clone();
        self.recording = Some(Recording { tape, logits });
        Ok(out)
    }

    /// Gradients of every parameter given `∂L/∂logits` for the last recorded
    /// forward pass. Each call returns fresh gradients.
    pub fn backward(&self, loss_grad: &Tensor<T>) -> Result<ParamGrads<T>> {
        let rec = self
            .recording
            .as_ref()
            .ok_or_else(|| ApaError::State("backward called before forward".into()))?;
        rec.tape.backward(rec.logits, loss_grad, &self.store)
    }

    /// Evaluation-mode pass returning logits, gates and penultimate features.
    pub fn inspect(&self, x: &Tensor<T>) -> Result<Inspection<T>> {
        let (tape, logits, gates, features) = self.run(x, Mode::Eval)?;
        Ok(Inspection {
            logits: tape.value(logits).clone(),
            gates: gates.iter().map(|&g| tape.value(g).clone()).collect(),
            features: tape.value(features).clone(),
        })
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.inspect(x)?.logits.argmax_rows())
    }

    /// Runs the attention block of hidden stage `stage` on `x` (`n × C`) in
    /// evaluation mode, returning `(X', gates)`.
    pub fn channel_attention_forward(&self, stage: usize, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let att = self
            .stages
            .get(stage)
            .and_then(|s| s.attention.as_ref())
            .ok_or_else(|| ApaError::Spec(format!("stage {stage} has no attention block")))?;
        let width = self.store.value(att.expand.weight).rows();
        if x.cols() != width {
            return Err(ApaError::Shape(format!("attention expects {width} channels, got {}", x.cols())));
        }
        let mut tape = Tape::new();
        let xn = tape.input(x.clone())?;
        let (out, gates) = att.forward(&mut tape, &self.store, xn, &mut Mode::Eval)?;
        Ok((tape.value(out).clone(), tape.value(gates).clone()))
    }
}
