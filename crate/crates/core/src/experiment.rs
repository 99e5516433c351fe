//! End-to-end toy runs on long-tailed cluster data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{make_longtail_split, seeded_rng, FrequencyGroup, LongTailSpec, SampledDataset};
use crate::error::{ApaError, Result};
use crate::nn::{
    evaluate_grouped, train, AttentionSpec, GateKind, GroupAccuracy, HiddenActivation, ModelSpec, NamedTensor,
    Network, TrainConfig, Trajectory,
};
use crate::stats::{covariances, nc1};
use crate::tensor::Tensor;

pub const REPORT_VERSION: u32 = 1;

fn default_version() -> u32 {
    REPORT_VERSION
}

fn default_test_per_class() -> usize {
    50
}

fn default_analysis_batch() -> usize {
    128
}

/// Full description of a toy run. `train.seed`, when present, overrides
/// `data.seed` so one number pins data, initialization and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub data: LongTailSpec,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Samples per group used for attention diagnostics.
    #[serde(default = "default_analysis_batch")]
    pub analysis_batch: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            version: REPORT_VERSION,
            data: LongTailSpec {
                classes: 20,
                dim: 16,
                n_max: 500,
                imbalance: 100.0,
                spread: 0.35,
                seed: 0,
            },
            test_per_class: default_test_per_class(),
            model: ModelSpec {
                hidden: vec![32, 32],
                hidden_activation: HiddenActivation::Relu,
                attention: Some(AttentionSpec {
                    reduction: 4,
                    gate: GateKind::Apa,
                    dropout: 0.0,
                    layer_norm: false,
                }),
            },
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            analysis_batch: default_analysis_batch(),
        }
    }
}

impl ToyConfig {
    /// The seed that drives the whole run.
    pub fn seed(&self) -> u64 {
        self.train.seed.unwrap_or(self.data.seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.seed = seed;
        self.train.seed = Some(seed);
        self
    }

    pub fn with_gate(mut self, gate: GateKind) -> Self {
        if let Some(a) = self.model.attention.as_mut() {
            a.gate = gate;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != REPORT_VERSION {
            return Err(ApaError::Spec(format!(
                "unsupported config version {} (expected {REPORT_VERSION})",
                self.version
            )));
        }
        if self.test_per_class == 0 {
            return Err(ApaError::Spec("test_per_class must be positive".into()));
        }
        self.data.class_sizes()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    /// Test accuracy per frequency group.
    pub group_acc: GroupAccuracy,
    /// Balanced test accuracy over all classes.
    pub avg_acc: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub seed: u64,
    pub config: ToyConfig,
    pub parameter_count: usize,
    pub class_sizes: Vec<usize>,
    pub groups: Vec<FrequencyGroup>,
    pub group_rule: String,
    /// Mean training loss per epoch.
    pub per_epoch: Vec<f64>,
    #[serde(rename = "final")]
    pub final_metrics: FinalMetrics,
    /// κ/λ trajectory per adaptive site: initial value, then one entry per epoch.
    pub params: BTreeMap<String, Trajectory>,
    pub weights: Vec<NamedTensor>,
}

/// A finished run together with the trained model and its data.
#[derive(Debug, Clone)]
pub struct ToyRun {
    pub report: RunReport,
    pub network: Network<f64>,
    pub train: SampledDataset<f64>,
    pub test: SampledDataset<f64>,
}

impl RunReport {
    /// Rebuilds the trained network from the stored weights and regenerates
    /// its data.
    pub fn restore(&self) -> Result<ToyRun> {
        let (train_set, test) = make_longtail_split::<f64>(&self.config.data, self.config.test_per_class)?;
        let mut network = Network::build(
            &self.config.model,
            self.config.data.dim,
            self.config.data.classes,
            &self.config.train.init,
            self.seed,
        )?;
        network.restore(&self.weights)?;
        Ok(ToyRun {
            report: self.clone(),
            network,
            train: train_set,
            test,
        })
    }
}

/// Generates data, trains, and evaluates one configuration.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyRun> {
    cfg.validate()?;
    let seed = cfg.seed();
    let cfg = cfg.clone().with_seed(seed);
    let (train_set, test) = make_longtail_split::<f64>(&cfg.data, cfg.test_per_class)?;
    let mut network = Network::build(&cfg.model, cfg.data.dim, cfg.data.classes, &cfg.train.init, seed)?;
    let history = train(&mut network, &train_set, &cfg.train)?;
    let group_acc = evaluate_grouped(&network, &test, &test.groups)?;
    let report = RunReport {
        version: REPORT_VERSION,
        seed,
        parameter_count: network.params().scalar_count(),
        class_sizes: train_set.class_sizes.clone(),
        groups: train_set.groups.clone(),
        group_rule: train_set.group_rule.clone(),
        per_epoch: history.per_epoch,
        final_metrics: FinalMetrics {
            avg_acc: group_acc.average,
            group_acc,
            train_acc: history.train_accuracy.average,
        },
        params: history.params,
        weights: network.snapshot(),
        config: cfg,
    };
    Ok(ToyRun {
        report,
        network,
        train: train_set,
        test,
    })
}

/// Penultimate features of `data` under `network`.
pub fn penultimate_features(network: &Network<f64>, data: &SampledDataset<f64>) -> Result<Tensor<f64>> {
    Ok(network.inspect(&data.features)?.features)
}

/// NC1 of the penultimate test features.
pub fn test_nc1(run: &ToyRun) -> Result<f64> {
    let f = penultimate_features(&run.network, &run.test)?;
    nc1(&covariances(&f, &run.test.labels)?)
}

/// Up to `batch` test indices of one group, chosen by a seeded shuffle.
pub fn group_batch(data: &SampledDataset<f64>, group: FrequencyGroup, batch: usize, seed: u64) -> Vec<usize> {
    let mut idx = data.indices_in(group);
    idx.shuffle(&mut seeded_rng(seed ^ group as u64));
    idx.truncate(batch);
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRun {
    /// Few-group test accuracy; absent when no class falls in the group.
    pub few: Option<f64>,
    pub average: f64,
    pub nc1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeed {
    pub seed: u64,
    pub apa: GateRun,
    pub sigmoid: GateRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateComparison {
    pub seeds: Vec<PairedSeed>,
    /// Mean of `apa.few − sigmoid.few` over seeds where both exist.
    pub few_gain: Option<f64>,
    /// Mean of `apa.average − sigmoid.average`.
    pub average_gain: f64,
    /// Mean of `apa.nc1 − sigmoid.nc1` (negative means APA collapses more).
    pub nc1_shift: f64,
    /// `nc1_shift` divided by the standard deviation of the paired differences.
    pub nc1_effect: f64,
    /// Seeds where APA reached lower NC1 than Sigmoid.
    pub nc1_wins: usize,
}

fn gate_run(cfg: &ToyConfig) -> Result<GateRun> {
    let run = run_toy(cfg)?;
    Ok(GateRun {
        few: run.report.final_metrics.group_acc.few,
        average: run.report.final_metrics.avg_acc,
        nc1: test_nc1(&run)?,
    })
}

/// Trains the configuration with APA and with Sigmoid gates for each seed.
/// Both gates share data and weight initialization per seed.
pub fn compare_gates(cfg: &ToyConfig, seeds: &[u64]) -> Result<GateComparison> {
    if cfg.model.attention.is_none() {
        return Err(ApaError::Spec("gate comparison needs an attention block".into()));
    }
    if seeds.is_empty() {
        return Err(ApaError::Spec("no seeds given".into()));
    }
    let rows = seeds
        .par_iter()
        .map(|&s| {
            let base = cfg.clone().with_seed(s);
            Ok(PairedSeed {
                seed: s,
                apa: gate_run(&base.clone().with_gate(GateKind::Apa))?,
                sigmoid: gate_run(&base.with_gate(GateKind::Sigmoid))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&PairedSeed) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let few: Vec<f64> = rows
        .iter()
        .filter_map(|r| Some(r.apa.few? - r.sigmoid.few?))
        .collect();
    let few_gain = (!few.is_empty()).then(|| few.iter().sum::<f64>() / few.len() as f64);
    let average_gain = mean(&|r| r.apa.average - r.sigmoid.average);
    let nc1_shift = mean(&|r| r.apa.nc1 - r.sigmoid.nc1);
    let var = if rows.len() > 1 {
        rows.iter()
            .map(|r| (r.apa.nc1 - r.sigmoid.nc1 - nc1_shift).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    let nc1_effect = if var > 0.0 { nc1_shift / var.sqrt() } else { 0.0 };
    let nc1_wins = rows.iter().filter(|r| r.apa.nc1 < r.sigmoid.nc1).count();
    Ok(GateComparison {
        seeds: rows,
        few_gain,
        average_gain,
        nc1_shift,
        nc1_effect,
        nc1_wins,
    })
}
