use std::io::Write;
use std::path::Path;

use apa_core::activation::{limits_check, LimitsReport};
use apa_core::datagen::{sample_theoretical, seeded_rng, FrequencyGroup};
use apa_core::experiment::{compare_gates, group_batch, run_toy, GateComparison, RunReport, ToyConfig};
use apa_core::gradcheck::{activation_probe_suite, model_gradient_check, ModelCheck, ProbeReport};
use apa_core::nn::{AttentionSpec, GateKind, HiddenActivation, InitConfig, LossKind, ModelSpec, Network};
use apa_core::stats::{
    attention_entropy, attention_variance, covariances, logit_alignment_report, nc1, AlignmentReport,
    ClassLogitTable, ClassLogits, Family, LogBase,
};
use apa_core::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{read_json, read_matrix_csv, to_json, write_csv_rows, write_json, write_matrix_csv};
use crate::{
    env_seed, AnalyzeArgs, Command, CompareArgs, EntropyArgs, ExampleArgs, GenLogitsArgs, GradCheckArgs, LimitsArgs,
    Nc1Args, Precision, Split, TrainArgs, REPORT_VERSION,
};

pub(crate) fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::GradCheck(a) => grad_check(&a, out),
        Command::LimitsCheck(a) => limits(&a, out),
        Command::AnalyzeLogits(a) => analyze_logits(&a, out, err),
        Command::GenLogits(a) => gen_logits(&a, out),
        Command::ExampleConfig(a) => example_config(&a, out),
        Command::TrainToy(a) => train_toy(&a, out),
        Command::CompareGates(a) => compare(&a, out),
        Command::AttentionEntropy(a) => entropy(&a, out),
        Command::Nc1(a) => nc1_cmd(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> CliResult<()> {
    out.write_fmt(text)
        .map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

macro_rules! say {
    ($out:expr, $($t:tt)*) => { emit($out, format_args!("{}\n", format_args!($($t)*))) };
}

fn seed_or_env(flag: Option<u64>) -> CliResult<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn maybe_write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    path.map_or(Ok(()), |p| write_json(p, value))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckRow {
    pub loss: LossKind,
    pub dropout_mask_seed: Option<u64>,
    pub check: ModelCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub version: u32,
    pub activations: ProbeReport,
    pub model_tolerance: f64,
    pub model: Vec<ModelCheckRow>,
    pub passed: bool,
}

/// A small network exercising every layer type, with at most 200 parameters.
fn probe_model(seed: u64) -> CliResult<(Network<f64>, Tensor<f64>, Vec<usize>)> {
    let spec = ModelSpec {
        hidden: vec![4],
        hidden_activation: HiddenActivation::Aglu,
        attention: Some(AttentionSpec {
            reduction: 2,
            gate: GateKind::Apa,
            dropout: 0.25,
            layer_norm: true,
        }),
    };
    let net = Network::build(&spec, 3, 3, &InitConfig::default(), seed)?;
    let mut rng = seeded_rng(seed);
    let x = Tensor::from_vec(8, 3, (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect())?;
    let y = (0..8).map(|i| i % 3).collect();
    Ok((net, x, y))
}

fn grad_check(a: &GradCheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let seed = seed_or_env(a.seed)?;
    let activations = activation_probe_suite(a.probes, seed, a.tolerance)?;
    let (net, x, y) = probe_model(seed)?;
    let mut model = Vec::new();
    for loss in [LossKind::SoftmaxCe, LossKind::SigmoidBce] {
        for mask in [None, Some(seed)] {
            model.push(ModelCheckRow {
                loss,
                dropout_mask_seed: mask,
                check: model_gradient_check(&net, &x, &y, loss, mask)?,
            });
        }
    }
    let model_ok = model.iter().all(|r| r.check.max_rel_error < a.model_tolerance);
    let report = GradCheckReport {
        version: REPORT_VERSION,
        passed: activations.passed() && model_ok,
        activations,
        model_tolerance: a.model_tolerance,
        model,
    };
    say!(out, "{:<16} {:>12} {:>10}  worst (z, kappa, lambda)", "derivative", "max rel err", "status")?;
    for c in &report.activations.checks {
        let ok = c.non_finite == 0 && c.max_rel_error < a.tolerance;
        say!(
            out,
            "{:<16} {:>12.3e} {:>10}  ({:.4}, {:.4}, {:.4e})",
            c.name,
            c.max_rel_error,
            if ok { "pass" } else { "FAIL" },
            c.worst.0,
            c.worst.1,
            c.worst.2
        )?;
    }
    for r in &report.model {
        say!(
            out,
            "model {:<10} {:>12.3e} {:>10}  {} params, dropout mask {}, worst {}",
            format!("{:?}", r.loss),
            r.check.max_rel_error,
            if r.check.max_rel_error < a.model_tolerance { "pass" } else { "FAIL" },
            r.check.checked,
            if r.dropout_mask_seed.is_some() { "frozen" } else { "off" },
            r.check.worst
        )?;
    }
    say!(
        out,
        "probes {} seed {} tolerance {:e}: max relative error {:.3e}",
        report.activations.probes,
        seed,
        a.tolerance,
        report.activations.max_rel_error()
    )?;
    maybe_write_json(a.out.as_deref(), &report)?;
    if report.activations.non_finite() > 0 {
        return Err(CliError::Numeric(format!(
            "{} non-finite analytic derivatives",
            report.activations.non_finite()
        )));
    }
    if !report.passed {
        return Err(CliError::Assertion("gradients disagree with finite differences".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionedLimits {
    pub version: u32,
    pub precision: String,
    #[serde(flatten)]
    pub report: LimitsReport,
}

fn limits(a: &LimitsArgs, out: &mut dyn Write) -> CliResult<()> {
    let (report, precision) = match a.precision {
        Precision::F64 => (limits_check::<f64>(a.tolerance), "f64"),
        Precision::F32 => (limits_check::<f32>(a.tolerance), "f32"),
    };
    say!(out, "{:<14} {:>12} {:>10} {:>7}  form", "identity", "max dev", "at z", "status")?;
    for c in &report.checks {
        say!(
            out,
            "{:<14} {:>12.3e} {:>10} {:>7}  {}",
            format!("{:?}", c.identity),
            c.max_deviation,
            c.worst_input,
            if c.passed { "pass" } else { "FAIL" },
            c.description
        )?;
    }
    let passed = report.all_passed();
    maybe_write_json(
        a.out.as_deref(),
        &VersionedLimits {
            version: REPORT_VERSION,
            precision: precision.into(),
            report,
        },
    )?;
    if !passed {
        return Err(CliError::Assertion("some limit identities do not hold".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitAnalysis {
    pub version: u32,
    pub rows: usize,
    #[serde(flatten)]
    pub report: AlignmentReport,
}

fn analyze_logits(a: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let m = read_matrix_csv(&a.input, "class", true)?;
    let k = m.values.cols();
    let groups: Vec<Option<FrequencyGroup>> = match &a.run {
        Some(p) => {
            let run: RunReport = read_json(p)?;
            if run.groups.len() != k {
                return Err(CliError::Data(format!(
                    "run has {} classes but the logit file has {k}",
                    run.groups.len()
                )));
            }
            run.groups.into_iter().map(Some).collect()
        }
        None => vec![None; k],
    };
    // Each class's distribution is its logit column over every sample.
    let table = ClassLogitTable::new(
        groups
            .into_iter()
            .enumerate()
            .map(|(c, group)| ClassLogits {
                samples: (0..m.values.rows()).map(|i| m.values[(i, c)]).collect(),
                group,
            })
            .collect(),
    );
    let report = LogitAnalysis {
        version: REPORT_VERSION,
        rows: m.values.rows(),
        report: logit_alignment_report(&table),
    };
    let r = &report.report;
    if r.evaluated == 0 {
        let _ = writeln!(err, "apa: warning: all {} classes were skipped (too few or constant samples)", r.class_count);
    }
    say!(
        out,
        "classes {} evaluated {} skipped {} gumbel fraction {}",
        r.class_count,
        r.evaluated,
        r.skipped,
        fmt_opt(r.gumbel_fraction)
    )?;
    write_json(&a.out, &report)?;
    if let Some(path) = &a.csv {
        let rows: Vec<Vec<String>> = r
            .classes
            .iter()
            .map(|c| {
                let f = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
                vec![
                    c.class.to_string(),
                    c.group.map_or_else(String::new, |g| g.name().to_string()),
                    c.n.to_string(),
                    f(c.skewness),
                    f(c.logistic.as_ref().map(|x| x.ks)),
                    f(c.gumbel.as_ref().map(|x| x.ks)),
                    c.winner.map_or_else(String::new, |w| format!("{w:?}").to_lowercase()),
                ]
            })
            .collect();
        write_csv_rows(
            path,
            &["class", "group", "n", "skewness", "ks_logistic", "ks_gumbel", "winner"],
            &rows,
        )?;
    }
    Ok(())
}

fn gen_logits(a: &GenLogitsArgs, out: &mut dyn Write) -> CliResult<()> {
    let seed = seed_or_env(a.seed)?;
    let family: Family = a.family.into();
    let k = a.classes;
    let mut values = Tensor::zeros(a.rows, k);
    for c in 0..k {
        // Locations spread downwards so classes differ, as real logits do.
        let loc = -(c as f64) * 0.25;
        let scale = 1.0 + 0.05 * c as f64;
        let col_seed = seed.wrapping_mul(1_000_003).wrapping_add(c as u64);
        let mut draws = sample_theoretical::<f64>(family, loc, scale, a.rows, col_seed)?
            .samples()
            .to_vec();
        // The samples come back sorted; shuffle them into rows.
        draws.shuffle(&mut seeded_rng(col_seed));
        for (i, v) in draws.into_iter().enumerate() {
            values.row_mut(i)[c] = v;
        }
    }
    let labels: Vec<usize> = (0..a.rows).map(|i| i % k).collect();
    write_matrix_csv(&a.out, "class", &values, &labels)?;
    say!(out, "wrote {} rows x {k} classes of {family:?} logits to {}", a.rows, a.out.display())
}

fn example_config(a: &ExampleArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = ToyConfig::default();
    if let Some(i) = a.imbalance {
        cfg.data.imbalance = i;
    }
    if let Some(g) = a.gate {
        cfg = cfg.with_gate(g.into());
    }
    cfg.validate()?;
    match &a.out {
        Some(p) => write_json(p, &cfg),
        None => emit(out, format_args!("{}", to_json(&cfg))),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<ToyConfig> {
    let mut cfg: ToyConfig = read_json(path)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    } else if cfg.train.seed.is_none() {
        if let Some(s) = env_seed()? {
            cfg = cfg.with_seed(s);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_toy(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(&a.config, a.seed)?;
    let run = run_toy(&cfg)?;
    let r = &run.report;
    let g = &r.final_metrics.group_acc;
    say!(
        out,
        "seed {} params {} epochs {} final loss {:.4}",
        r.seed,
        r.parameter_count,
        r.per_epoch.len(),
        r.per_epoch.last().copied().unwrap_or(f64::NAN)
    )?;
    say!(
        out,
        "test accuracy many {} medium {} few {} average {:.4} (train {:.4})",
        fmt_opt(g.many),
        fmt_opt(g.medium),
        fmt_opt(g.few),
        g.average,
        r.final_metrics.train_acc
    )?;
    for (site, t) in &r.params {
        say!(
            out,
            "{site}: kappa {:.4} -> {:.4}, lambda {:.4} -> {:.4}",
            t.kappa[0],
            t.kappa.last().unwrap(),
            t.lambda[0],
            t.lambda.last().unwrap()
        )?;
    }
    write_json(&a.out, r)?;
    if a.features_out.is_some() || a.logits_out.is_some() {
        let ins = run.network.inspect(&run.test.features)?;
        if let Some(p) = &a.features_out {
            write_matrix_csv(p, "f", &ins.features, &run.test.labels)?;
        }
        if let Some(p) = &a.logits_out {
            write_matrix_csv(p, "class", &ins.logits, &run.test.labels)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub version: u32,
    pub config: ToyConfig,
    #[serde(flatten)]
    pub comparison: GateComparison,
}

fn compare(a: &CompareArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(&a.config, None)?;
    let first = seed_or_env(a.first_seed)?;
    let seeds: Vec<u64> = (first..first + a.seeds as u64).collect();
    let c = compare_gates(&cfg, &seeds)?;
    say!(
        out,
        "{:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "seed",
        "apa few",
        "sig few",
        "apa avg",
        "sig avg",
        "apa nc1",
        "sig nc1"
    )?;
    for s in &c.seeds {
        say!(
            out,
            "{:>6} {:>9} {:>9} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            s.seed,
            fmt_opt(s.apa.few),
            fmt_opt(s.sigmoid.few),
            s.apa.average,
            s.sigmoid.average,
            s.apa.nc1,
            s.sigmoid.nc1
        )?;
    }
    say!(
        out,
        "few gain {} average gain {:.4} nc1 shift {:.4} (effect {:.3}, apa lower in {}/{})",
        fmt_opt(c.few_gain),
        c.average_gain,
        c.nc1_shift,
        c.nc1_effect,
        c.nc1_wins,
        c.seeds.len()
    )?;
    maybe_write_json(
        a.out.as_deref(),
        &ComparisonReport {
            version: REPORT_VERSION,
            config: cfg,
            comparison: c,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    /// Group name, or "all".
    pub split: String,
    pub layer: usize,
    pub samples: usize,
    pub entropy: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub version: u32,
    pub seed: u64,
    pub base: LogBase,
    pub batch: usize,
    pub rows: Vec<EntropyRow>,
    /// Whether the few-group batch has lower final-layer entropy than the
    /// many-group batch (group split only).
    pub few_below_many: Option<bool>,
}

fn entropy(a: &EntropyArgs, out: &mut dyn Write) -> CliResult<()> {
    let report: RunReport = read_json(&a.run)?;
    let run = report.restore()?;
    if run.network.attention_layers() == 0 {
        return Err(CliError::Data("the run has no attention layers".into()));
    }
    let base: LogBase = a.base.into();
    let batch = report.config.analysis_batch;
    let batches: Vec<(String, Vec<usize>)> = match a.split {
        Split::Groups => FrequencyGroup::ALL
            .iter()
            .map(|&g| (g.name().to_string(), group_batch(&run.test, g, batch, report.seed)))
            .filter(|(_, idx)| !idx.is_empty())
            .collect(),
        Split::All => {
            let mut idx: Vec<usize> = (0..run.test.len()).collect();
            idx.shuffle(&mut seeded_rng(report.seed));
            idx.truncate(batch);
            idx.sort_unstable();
            vec![("all".to_string(), idx)]
        }
    };
    let mut rows = Vec::new();
    for (name, idx) in &batches {
        let gates = run.network.inspect(&run.test.features.select_rows(idx))?.gates;
        let variances = attention_variance(&gates)?;
        for (layer, (g, v)) in gates.iter().zip(variances).enumerate() {
            rows.push(EntropyRow {
                split: name.clone(),
                layer,
                samples: idx.len(),
                entropy: attention_entropy(g, base)?,
                variance: v,
            });
        }
    }
    let last = run.network.attention_layers() - 1;
    let final_entropy = |s: &str| rows.iter().find(|r| r.split == s && r.layer == last).map(|r| r.entropy);
    let few_below_many = match (final_entropy("few"), final_entropy("many")) {
        (Some(f), Some(m)) => Some(f <= m),
        _ => None,
    };
    say!(out, "{:<8} {:>5} {:>7} {:>10} {:>10}", "split", "layer", "samples", "entropy", "variance")?;
    for r in &rows {
        say!(
            out,
            "{:<8} {:>5} {:>7} {:>10.6} {:>10.6}",
            r.split,
            r.layer,
            r.samples,
            r.entropy,
            r.variance
        )?;
    }
    if let Some(b) = few_below_many {
        say!(out, "few-group final-layer entropy {} many-group", if b { "<=" } else { ">" })?;
    }
    maybe_write_json(
        a.out.as_deref(),
        &EntropyReport {
            version: REPORT_VERSION,
            seed: report.seed,
            base,
            batch,
            rows,
            few_below_many,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nc1Report {
    pub version: u32,
    pub samples: usize,
    pub dim: usize,
    pub classes: usize,
    pub nc1: f64,
}

fn nc1_cmd(a: &Nc1Args, out: &mut dyn Write) -> CliResult<()> {
    let m = read_matrix_csv(&a.features, "f", false)?;
    let pair = covariances(&m.values, &m.labels)?;
    let value = nc1(&pair)?;
    let report = Nc1Report {
        version: REPORT_VERSION,
        samples: m.labels.len(),
        dim: pair.dim,
        classes: pair.classes,
        nc1: value,
    };
    say!(out, "nc1 {value} (n {}, d {}, K {})", report.samples, report.dim, report.classes)?;
    maybe_write_json(a.out.as_deref(), &report)
}
