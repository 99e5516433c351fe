//! The `apa` command-line tool.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 success, 1 failed check, 2 numeric failure, 64 usage error,
//! 65 bad input data.

mod commands;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use apa_core::nn::GateKind;
use apa_core::stats::{Family, LogBase};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{
    ComparisonReport, EntropyReport, EntropyRow, GradCheckReport, LogitAnalysis, ModelCheckRow, Nc1Report,
    VersionedLimits,
};
pub use error::{CliError, CliResult};

/// Version tag written into every JSON report.
pub const REPORT_VERSION: u32 = 1;

/// Environment variable consulted when a command needs a seed and none is given.
pub const SEED_ENV: &str = "APA_SEED";

#[derive(Debug, Parser)]
#[command(name = "apa", version, about = "Adaptive parametric activations: gradient checks, logit diagnostics and long-tail toy experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare analytic APA/AGLU derivatives and model backprop with finite differences.
    GradCheck(GradCheckArgs),
    /// Check that APA/AGLU reproduce the activations they generalise.
    LimitsCheck(LimitsArgs),
    /// Fit Logistic and Gumbel distributions to per-class logits and compare KS distances.
    AnalyzeLogits(AnalyzeArgs),
    /// Write a synthetic logit file drawn from one distribution family.
    GenLogits(GenLogitsArgs),
    /// Print a default toy configuration.
    ExampleConfig(ExampleArgs),
    /// Train a toy model on generated long-tailed data.
    TrainToy(TrainArgs),
    /// Train paired APA-gate and Sigmoid-gate models over several seeds.
    CompareGates(CompareArgs),
    /// Entropy and variance of channel-attention gates of a trained run.
    AttentionEntropy(EntropyArgs),
    /// Neural-collapse NC1 measure of a labeled feature file.
    Nc1(Nc1Args),
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(v) => Err(format!("{v} is not a finite non-negative number")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Number of random (z, κ, λ) probes.
    #[arg(long, default_value_t = 1000, value_parser = positive_usize)]
    pub probes: usize,
    /// Probe seed [default: $APA_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pass iff every relative error is below this.
    #[arg(long, default_value_t = 1e-5, value_parser = non_negative_f64)]
    pub tolerance: f64,
    /// Bound for the full-model backprop check.
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative_f64)]
    pub model_tolerance: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    /// Bound for the limit approximations; exact identities must hold to 1e-12.
    #[arg(long, default_value_t = 1e-5, value_parser = non_negative_f64)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Logit file with header class_0,…,class_{K−1},label.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON report destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Plot-ready per-class KS distances.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Training run whose frequency groups tag the classes.
    #[arg(long)]
    pub run: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Logistic,
    Gumbel,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::Gumbel => Family::Gumbel,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenLogitsArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 20, value_parser = positive_usize)]
    pub classes: usize,
    #[arg(long, default_value_t = 10_000, value_parser = positive_usize)]
    pub rows: usize,
    /// [default: $APA_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GateArg {
    Apa,
    Sigmoid,
}

impl From<GateArg> for GateKind {
    fn from(g: GateArg) -> Self {
        match g {
            GateArg::Apa => GateKind::Apa,
            GateArg::Sigmoid => GateKind::Sigmoid,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[arg(long)]
    pub imbalance: Option<f64>,
    #[arg(long, value_enum)]
    pub gate: Option<GateArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed [fallback when the config has none: $APA_SEED].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Penultimate test features as f_0,…,f_{d−1},label.
    #[arg(long)]
    pub features_out: Option<PathBuf>,
    /// Test logits as class_0,…,class_{K−1},label.
    #[arg(long)]
    pub logits_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Number of paired seeds.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub seeds: usize,
    /// First seed [default: $APA_SEED, else 0].
    #[arg(long)]
    pub first_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    /// One batch per frequency group.
    Groups,
    /// One batch drawn from the whole test set.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    Two,
    Natural,
}

impl From<BaseArg> for LogBase {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::Two => LogBase::Two,
            BaseArg::Natural => LogBase::Natural,
        }
    }
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    /// Report written by train-toy.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Groups)]
    pub split: Split,
    #[arg(long, value_enum, default_value_t = BaseArg::Two)]
    pub base: BaseArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Nc1Args {
    /// Feature file with header f_0,…,f_{d−1},label.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Seed from `$APA_SEED`, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("{SEED_ENV}: {e}"))),
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the exit code. Diagnostics go to `err`, results to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    64
                }
            };
        }
    };
    match commands::execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "apa: {e}");
            e.exit_code()
        }
    }
}
