use std::path::Path;
use std::process::{Command, Output};

use apa_cli::{ComparisonReport, EntropyReport, GradCheckReport, LogitAnalysis, Nc1Report, VersionedLimits};
use apa_core::experiment::{RunReport, ToyConfig};
use apa_core::nn::GateKind;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn apa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apa"))
        .args(args)
        .current_dir(dir)
        .env_remove("APA_SEED")
        .output()
        .unwrap()
}

fn apa_env(dir: &Path, args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apa"))
        .args(args)
        .current_dir(dir)
        .env("APA_SEED", seed)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(gate: GateKind) -> ToyConfig {
    let mut cfg = ToyConfig::default().with_gate(gate);
    cfg.data.classes = 6;
    cfg.data.n_max = 100;
    cfg.train.epochs = 3;
    cfg.test_per_class = 20;
    cfg
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

/// Parses a report and checks that re-emitting it reproduces the file.
fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(path: &Path) -> T {
    let text = std::fs::read_to_string(path).unwrap();
    let parsed: T = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&parsed).unwrap() + "\n";
    assert_eq!(again, text, "{}", path.display());
    assert_eq!(serde_json::from_str::<T>(&again).unwrap(), parsed);
    parsed
}

#[test]
fn grad_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = apa(d, &["grad-check", "--probes", "100", "--out", "g.json"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let r: GradCheckReport = round_trip(&d.join("g.json"));
    assert!(r.passed && r.activations.max_rel_error() < 1e-5);
    assert_eq!(code(&apa(d, &["grad-check", "--probes", "20", "--tolerance", "0"])), 1);
    assert_eq!(code(&apa(d, &["grad-check", "--probes", "0"])), 64);
    assert_eq!(code(&apa(d, &["grad-check", "--tolerance", "-1"])), 64);
}

#[test]
fn usage_errors_exit_64_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&apa(d, &["no-such-command"])), 64);
    assert_eq!(code(&apa(d, &["limits-check", "--bogus"])), 64);
    assert_eq!(code(&apa(d, &[])), 64);
    assert_eq!(code(&apa(d, &["--help"])), 0);
    let bad_env = apa_env(d, &["gen-logits", "--family", "gumbel", "--out", "x.csv"], "not-a-number");
    assert_eq!(code(&bad_env), 64);
}

#[test]
fn limits_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = apa(dir.path(), &["limits-check", "--out", "l.json"]);
    assert_eq!(code(&o), 0);
    let r: VersionedLimits = round_trip(&dir.path().join("l.json"));
    assert_eq!(r.report.checks.len(), 7);
    assert_eq!(code(&apa(dir.path(), &["limits-check", "--precision", "f32", "--tolerance", "1e-3"])), 0);
}

#[test]
fn synthetic_logits_are_classified_by_family() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (family, gumbel) in [("gumbel", true), ("logistic", false)] {
        let csv = format!("{family}.csv");
        let json = format!("{family}.json");
        assert_eq!(code(&apa(d, &["gen-logits", "--family", family, "--out", &csv, "--seed", "4"])), 0);
        let o = apa(d, &["analyze-logits", "--input", &csv, "--out", &json, "--csv", "fig.csv"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let r: LogitAnalysis = round_trip(&d.join(&json));
        let frac = r.report.gumbel_fraction.unwrap();
        if gumbel {
            assert!(frac >= 0.95, "{frac}");
        } else {
            assert!(frac <= 0.05, "{frac}");
        }
        let fig = std::fs::read_to_string(d.join("fig.csv")).unwrap();
        assert!(fig.starts_with("class,group,n,skewness,ks_logistic,ks_gumbel,winner"));
        assert_eq!(fig.lines().count(), 21);
    }
}

#[test]
fn malformed_logit_files_exit_65_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases = [
        ("cell.csv", "class_0,class_1,label\n1,2,0\n3,x,1\n", "row 3, column 2"),
        ("label.csv", "class_0,class_1,label\n1,2,5\n", "row 2, column 3"),
        ("header.csv", "a,b,label\n1,2,0\n", "header column 1"),
        ("ragged.csv", "class_0,class_1,label\n1,2\n", "row 2"),
    ];
    for (name, text, needle) in cases {
        write(d, name, text);
        let o = apa(d, &["analyze-logits", "--input", name, "--out", "r.json"]);
        assert_eq!(code(&o), 65, "{name}");
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let o = apa(d, &["analyze-logits", "--input", "missing.csv", "--out", "r.json"]);
    assert_eq!(code(&o), 65);
}

#[test]
fn single_row_file_skips_all_classes_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "one.csv", "class_0,class_1,class_2,label\n0.1,0.2,0.3,2\n");
    let o = apa(dir.path(), &["analyze-logits", "--input", "one.csv", "--out", "r.json"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));
    let r: LogitAnalysis = round_trip(&dir.path().join("r.json"));
    assert_eq!((r.report.skipped, r.report.gumbel_fraction), (3, None));
}

#[test]
fn seed_flag_and_environment_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    apa(d, &["gen-logits", "--family", "gumbel", "--rows", "50", "--seed", "9", "--out", "a.csv"]);
    apa_env(d, &["gen-logits", "--family", "gumbel", "--rows", "50", "--out", "b.csv"], "9");
    apa(d, &["gen-logits", "--family", "gumbel", "--rows", "50", "--out", "c.csv"]);
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));

    // A config seed wins over the environment; the flag wins over both.
    let mut cfg = small_config(GateKind::Apa);
    cfg.train.seed = Some(2);
    write(d, "cfg.json", &serde_json::to_string(&cfg).unwrap());
    apa_env(d, &["train-toy", "--config", "cfg.json", "--out", "env.json"], "7");
    let env_run: RunReport = round_trip(&d.join("env.json"));
    assert_eq!(env_run.seed, 2);
    apa_env(d, &["train-toy", "--config", "cfg.json", "--out", "flag.json", "--seed", "5"], "7");
    let flag_run: RunReport = round_trip(&d.join("flag.json"));
    assert_eq!(flag_run.seed, 5);
    cfg.train.seed = None;
    write(d, "noseed.json", &serde_json::to_string(&cfg).unwrap());
    apa_env(d, &["train-toy", "--config", "noseed.json", "--out", "fallback.json"], "7");
    let fallback: RunReport = round_trip(&d.join("fallback.json"));
    assert_eq!(fallback.seed, 7);
}

#[test]
fn train_pipeline_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cfg.json", &serde_json::to_string(&small_config(GateKind::Apa)).unwrap());
    let o = apa(
        d,
        &["train-toy", "--config", "cfg.json", "--out", "run.json", "--features-out", "f.csv", "--logits-out", "l.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run: RunReport = round_trip(&d.join("run.json"));
    assert_eq!(run.per_epoch.len(), 3);
    assert_eq!(run.params.len(), 2);
    assert!(run.params.values().all(|t| t.kappa.len() == 4 && t.lambda.len() == 4));

    let o = apa(d, &["nc1", "--features", "f.csv", "--out", "nc1.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let n: Nc1Report = round_trip(&d.join("nc1.json"));
    assert_eq!((n.classes, n.dim, n.samples), (6, 32, 120));
    assert!(n.nc1 > 0.0);

    assert_eq!(code(&apa(d, &["analyze-logits", "--input", "l.csv", "--out", "ks.json", "--run", "run.json"])), 0);
    let ks: LogitAnalysis = round_trip(&d.join("ks.json"));
    assert!(ks.report.classes.iter().all(|c| c.group.is_some()));

    let o = apa(d, &["attention-entropy", "--run", "run.json", "--out", "e.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e: EntropyReport = round_trip(&d.join("e.json"));
    assert_eq!(e.rows.len(), 6);
    let o = apa(d, &["attention-entropy", "--run", "run.json", "--split", "all", "--base", "natural"]);
    assert_eq!(code(&o), 0);
}

fn set_weights(run: &mut RunReport, name: &str, value: f64) {
    let t = run.weights.iter_mut().find(|t| t.name == name).unwrap();
    t.data.iter_mut().for_each(|v| *v = value);
}

#[test]
fn entropy_of_saturated_and_half_gates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cfg.json", &serde_json::to_string(&small_config(GateKind::Sigmoid)).unwrap());
    assert_eq!(code(&apa(d, &["train-toy", "--config", "cfg.json", "--out", "run.json"])), 0);
    let run: RunReport = serde_json::from_str(&std::fs::read_to_string(d.join("run.json")).unwrap()).unwrap();
    for (bias, expect) in [(60.0, 0.0), (0.0, 1.0)] {
        let mut r = run.clone();
        for stage in ["stage0", "stage1"] {
            set_weights(&mut r, &format!("{stage}.attn.gate.weight"), 0.0);
            set_weights(&mut r, &format!("{stage}.attn.gate.bias"), bias);
        }
        write(d, "edited.json", &serde_json::to_string(&r).unwrap());
        assert_eq!(code(&apa(d, &["attention-entropy", "--run", "edited.json", "--out", "e.json"])), 0);
        let e: EntropyReport = round_trip(&d.join("e.json"));
        assert!(e.rows.iter().all(|row| (row.entropy - expect).abs() < 1e-5), "{e:?}");
    }
}

#[test]
fn nc1_command_cases() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "collapsed.csv", "f_0,f_1,label\n1,0,0\n1,0,0\n0,3,1\n0,3,1\n");
    let o = apa(d, &["nc1", "--features", "collapsed.csv", "--out", "c.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(round_trip::<Nc1Report>(&d.join("c.json")).nc1, 0.0);
    // Class means ±1 and within-class offsets ±1 give unit covariances: NC1 = d/K.
    write(d, "unit.csv", "f_0,label\n0,0\n2,0\n-2,1\n0,1\n");
    apa(d, &["nc1", "--features", "unit.csv", "--out", "u.json"]);
    assert!((round_trip::<Nc1Report>(&d.join("u.json")).nc1 - 0.5).abs() < 1e-12);
    write(d, "one.csv", "f_0,label\n1,0\n2,0\n");
    assert_eq!(code(&apa(d, &["nc1", "--features", "one.csv"])), 2);
    write(d, "gap.csv", "f_0,label\n1,0\n2,2\n");
    assert_eq!(code(&apa(d, &["nc1", "--features", "gap.csv"])), 65);
}

#[test]
fn compare_and_example_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = apa(d, &["example-config", "--gate", "sigmoid", "--imbalance", "10"]);
    assert_eq!(code(&o), 0);
    let cfg: ToyConfig = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg.model.attention.as_ref().unwrap().gate, GateKind::Sigmoid);
    assert_eq!(cfg.data.imbalance, 10.0);

    write(d, "cfg.json", &serde_json::to_string(&small_config(GateKind::Apa)).unwrap());
    let o = apa(d, &["compare-gates", "--config", "cfg.json", "--seeds", "2", "--first-seed", "3", "--out", "c.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c: ComparisonReport = round_trip(&d.join("c.json"));
    assert_eq!(c.comparison.seeds.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![3, 4]);

    write(d, "broken.json", "{\"version\": 1}");
    assert_eq!(code(&apa(d, &["train-toy", "--config", "broken.json", "--out", "x.json"])), 65);
    let mut bad = small_config(GateKind::Apa);
    bad.version = 99;
    write(d, "v99.json", &serde_json::to_string(&bad).unwrap());
    assert_eq!(code(&apa(d, &["train-toy", "--config", "v99.json", "--out", "x.json"])), 65);
}
