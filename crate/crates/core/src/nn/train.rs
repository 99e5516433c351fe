use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{seeded_rng, FrequencyGroup, SampledDataset};
use crate::error::{ApaError, Result};
use crate::nn::loss::{loss_and_grad, LossKind};
use crate::nn::network::{InitConfig, Mode, Network};
use crate::nn::optim::Sgd;
use crate::scalar::Scalar;

fn default_momentum() -> f64 {
    0.9
}

fn default_clamp() -> (f64, f64) {
    (1e-4, 1e4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Seed for shuffling and dropout masks (and, in toy runs, for data and
    /// initialization). Absent means "use the caller's fallback".
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_clamp")]
    pub lambda_clamp: (f64, f64),
    #[serde(default)]
    pub init: InitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            learning_rate: 0.05,
            momentum: default_momentum(),
            seed: None,
            loss: LossKind::default(),
            lambda_clamp: default_clamp(),
            init: InitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ApaError::Spec(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ApaError::Spec(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(ApaError::Spec("batch size must be positive".into()));
        }
        let (lo, hi) = self.lambda_clamp;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(ApaError::Spec(format!("invalid lambda clamp ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// κ and λ of one adaptive site, sampled at initialization and after every epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kappa: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Top-1 accuracy per frequency group; a group without samples is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    /// Accuracy over all samples.
    pub average: f64,
}

impl GroupAccuracy {
    pub fn get(&self, g: FrequencyGroup) -> Option<f64> {
        match g {
            FrequencyGroup::Many => self.many,
            FrequencyGroup::Medium => self.medium,
            FrequencyGroup::Few => self.few,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub per_epoch: Vec<f64>,
    pub params: BTreeMap<String, Trajectory>,
    pub train_accuracy: GroupAccuracy,
}

/// Accuracy of `predictions` grouped by the group of each true label.
pub fn grouped_accuracy(predictions: &[usize], labels: &[usize], groups: &[FrequencyGroup]) -> Result<GroupAccuracy> {
    if predictions.len() != labels.len() {
        return Err(ApaError::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(ApaError::Domain("accuracy of an empty dataset".into()));
    }
    let mut hit = [0usize; 3];
    let mut tot = [0usize; 3];
    for (&p, &y) in predictions.iter().zip(labels) {
        let g = *groups
            .get(y)
            .ok_or_else(|| ApaError::Domain(format!("class {y} has no group")))? as usize;
        tot[g] += 1;
        hit[g] += usize::from(p == y);
    }
    let frac = |g: usize| (tot[g] > 0).then(|| hit[g] as f64 / tot[g] as f64);
    Ok(GroupAccuracy {
        many: frac(0),
        medium: frac(1),
        few: frac(2),
        average: hit.iter().sum::<usize>() as f64 / labels.len() as f64,
    })
}

const EVAL_CHUNK: usize = 256;

/// Top-1 accuracy per group. Chunks are evaluated in parallel on a shared
/// read-only model; predictions are merged in row order.
pub fn evaluate_grouped<T: Scalar>(
    model: &Network<T>,
    data: &SampledDataset<T>,
    groups: &[FrequencyGroup],
) -> Result<GroupAccuracy> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let preds = idx
        .par_chunks(EVAL_CHUNK)
        .map(|c| model.predict(&data.features.select_rows(c)))
        .collect::<Result<Vec<_>>>()?
        .concat();
    grouped_accuracy(&preds, &data.labels, groups)
}

/// Offset of the shuffling/dropout stream relative to the run seed.
const TRAIN_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

fn record<T: Scalar>(model: &Network<T>, params: &mut BTreeMap<String, Trajectory>) {
    for s in model.adaptive_sites() {
        let t = params.entry(s.site).or_default();
        t.kappa.push(s.kappa);
        t.lambda.push(s.lambda);
    }
}

/// Minibatch SGD with momentum. Each epoch visits a fresh permutation
/// (full-batch runs keep the natural order); λ is clamped after every step.
pub fn train<T: Scalar>(model: &mut Network<T>, data: &SampledDataset<T>, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ApaError::Domain("cannot train on an empty dataset".into()));
    }
    let mut rng = seeded_rng(cfg.seed.unwrap_or(0) ^ TRAIN_STREAM);
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum, cfg.lambda_clamp);
    let mut params = BTreeMap::new();
    record(model, &mut params);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut per_epoch = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.batch_size < n {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.features.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let diverged = |e: ApaError| match e {
                ApaError::NonFinite(d) => ApaError::Diverged { epoch, detail: d },
                other => other,
            };
            let logits = model.forward(&x, Mode::Train(&mut rng)).map_err(diverged)?;
            let (loss, g) = loss_and_grad(cfg.loss, &logits, &y)?;
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(ApaError::Diverged {
                    epoch,
                    detail: format!("loss became {loss}"),
                });
            }
            let grads = model.backward(&g)?;
            if !grads.all_finite() {
                return Err(ApaError::Diverged {
                    epoch,
                    detail: "non-finite gradient".into(),
                });
            }
            opt.step(model.params_mut(), &grads)?;
            total += loss * chunk.len() as f64;
        }
        per_epoch.push(total / n as f64);
        record(model, &mut params);
    }
    let train_accuracy = evaluate_grouped(model, data, &data.groups)?;
    Ok(TrainHistory {
        per_epoch,
        params,
        train_accuracy,
    })
}
