use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use cbamnet::grid::load_panel;
use cbamnet::model::Checkpoint;
use cbamnet::training::{evaluate, PreparedData, TrainConfig, TrainReport};

const SYNTH: &str = include_str!("../../../configs/synth.toml");
const SCENARIOS: &str = include_str!("../../../configs/scenarios.toml");

const TOY_TRAIN: &str = r#"
[model]
layers = 1
hidden = 8
head_hidden = 8
window = 3
lambda_ci = 1.0
lambda_price = 1.0
lambda_corr = 0.1
learning_rate = 0.003
epochs = 5
patience = 0
batch_hours = 32
seed = 1
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbamnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Runs a command expected to fail and returns its stderr.
fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn synth_config(hours: usize) -> String {
    SYNTH.replace("hours = 2200", &format!("hours = {hours}"))
}

fn artifacts(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    manifest["artifacts"].clone()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic data set with a toy model trained on it.
struct Toy {
    root: PathBuf,
    data: PathBuf,
    model: PathBuf,
    train_config: String,
}

fn toy() -> &'static Toy {
    static CELL: OnceLock<Toy> = OnceLock::new();
    CELL.get_or_init(|| {
        let root = scratch("toy");
        let synth = write(&root, "synth.toml", &synth_config(600));
        let train_config = write(&root, "train.toml", TOY_TRAIN);
        let data = root.join("data");
        let model = root.join("model");
        ok(&["synth", "--config", &synth, "--out-dir", s(&data)]);
        ok(&["train", "--config", &train_config, "--data-dir", s(&data), "--out-dir", s(&model)]);
        Toy {
            root,
            data,
            model,
            train_config,
        }
    })
}

#[test]
fn synth_writes_one_row_per_hour() {
    let dir = scratch("synth_rows");
    let cfg = write(&dir, "synth.toml", &synth_config(8760));
    ok(&["synth", "--config", &cfg, "--out-dir", s(&dir.join("out"))]);
    let panel = std::fs::read_to_string(dir.join("out/panel.csv")).unwrap();
    assert_eq!(panel.lines().count(), 8760 + 1);
    let (graph, _) = load_panel(&dir.join("out/graph.csv"), &dir.join("out/panel.csv")).unwrap();
    assert_eq!(graph.len(), 8);
}

#[test]
fn synth_is_reproducible() {
    let dir = scratch("synth_repro");
    let cfg = write(&dir, "synth.toml", &synth_config(300));
    ok(&["synth", "--config", &cfg, "--out-dir", s(&dir.join("a")), "--seed", "5"]);
    ok(&["synth", "--config", &cfg, "--out-dir", s(&dir.join("b")), "--seed", "5"]);
    ok(&["synth", "--config", &cfg, "--out-dir", s(&dir.join("c")), "--seed", "6"]);
    assert_eq!(artifacts(&dir.join("a")), artifacts(&dir.join("b")));
    assert_ne!(artifacts(&dir.join("a")), artifacts(&dir.join("c")));
}

#[test]
fn synth_rejects_zero_hours() {
    let dir = scratch("synth_zero");
    let cfg = write(&dir, "synth.toml", &synth_config(0));
    let err = fails(&["synth", "--config", &cfg, "--out-dir", s(&dir.join("out"))]);
    assert!(err.starts_with("error[config]"), "{err}");
    assert!(!dir.join("out/manifest.json").exists());
}

#[test]
fn synth_reports_unwritable_output() {
    let dir = scratch("synth_unwritable");
    let cfg = write(&dir, "synth.toml", &synth_config(50));
    let blocker = write(&dir, "blocker", "");
    let err = fails(&["synth", "--config", &cfg, "--out-dir", &format!("{blocker}/out")]);
    assert!(err.starts_with("error[io]"), "{err}");
}

#[test]
fn train_reports_every_epoch() {
    let t = toy();
    let report: TrainReport =
        serde_json::from_str(&std::fs::read_to_string(t.model.join("train_report.json")).unwrap()).unwrap();
    assert_eq!(report.epochs.len(), 5);
    let curve = std::fs::read_to_string(t.model.join("epochs.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5 + 1);
    let listed: Vec<String> = artifacts(&t.model)
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap().to_string())
        .collect();
    for name in &listed {
        assert!(t.model.join(name).exists(), "{name}");
    }
    assert_eq!(listed.len(), 3);
}

#[test]
fn reloaded_checkpoint_reproduces_test_metrics() {
    let t = toy();
    let report: TrainReport =
        serde_json::from_str(&std::fs::read_to_string(t.model.join("train_report.json")).unwrap()).unwrap();
    let ckpt = Checkpoint::load(&t.model.join("checkpoint.json")).unwrap();
    let cfg: TrainConfig = toml::from_str(TOY_TRAIN).unwrap();
    let (graph, panel) = load_panel(&t.data.join("graph.csv"), &t.data.join("panel.csv")).unwrap();
    let data = PreparedData::with_norm(&cfg, ckpt.norm.clone(), &graph, &panel).unwrap();
    let m = evaluate(&ckpt.params, &data, &panel, &data.test_hours()).unwrap();
    assert_eq!(m.hours, report.test.hours);
    for (a, b) in [
        (m.rmse_ci, report.test.rmse_ci),
        (m.rmse_price, report.test.rmse_price),
        (m.mae_ci, report.test.mae_ci),
        (m.mae_price, report.test.mae_price),
        (m.pred_corr, report.test.pred_corr),
    ] {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

#[test]
fn train_names_a_missing_config_field() {
    let t = toy();
    let dir = scratch("train_missing");
    let cfg = write(&dir, "train.toml", &TOY_TRAIN.replace("epochs = 5\n", ""));
    let err = fails(&["train", "--config", &cfg, "--data-dir", s(&t.data), "--out-dir", s(&dir.join("out"))]);
    assert!(err.starts_with("error[config]"), "{err}");
    assert!(err.contains("`epochs`"), "{err}");
}

#[test]
fn train_is_reproducible() {
    let t = toy();
    let out = t.root.join("model_again");
    ok(&["train", "--config", &t.train_config, "--data-dir", s(&t.data), "--out-dir", s(&out)]);
    assert_eq!(artifacts(&t.model), artifacts(&out));
}

#[test]
fn scenario_writes_one_file_per_scenario() {
    let t = toy();
    let dir = scratch("scenario_five");
    let file = write(&dir, "scenarios.toml", SCENARIOS);
    let ckpt = t.model.join("checkpoint.json");
    let out = dir.join("out");
    ok(&["scenario", "--checkpoint", s(&ckpt), "--scenario-file", &file, "--data-dir", s(&t.data), "--out-dir", s(&out)]);
    let mut impacts: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("impacts_"))
        .collect();
    impacts.sort();
    assert_eq!(impacts.len(), 5);
    let summary = std::fs::read_to_string(out.join("scenario_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5 + 1);

    let zero = std::fs::read_to_string(out.join(&impacts[0])).unwrap();
    let mut rows = 0;
    for line in zero.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2].parse::<f64>().unwrap(), 0.0, "{line}");
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 8);

    let again = dir.join("again");
    ok(&["scenario", "--checkpoint", s(&ckpt), "--scenario-file", &file, "--data-dir", s(&t.data), "--out-dir", s(&again)]);
    assert_eq!(artifacts(&out), artifacts(&again));
}

#[test]
fn scenario_rejects_unknown_node() {
    let t = toy();
    let dir = scratch("scenario_unknown");
    let file = write(
        &dir,
        "scenarios.toml",
        "[[scenario]]\nlabel = \"x\"\nintensity = 1.0\nnodes = [\"PL\", \"XX\"]\n",
    );
    let ckpt = t.model.join("checkpoint.json");
    let err = fails(&[
        "scenario",
        "--checkpoint",
        s(&ckpt),
        "--scenario-file",
        &file,
        "--data-dir",
        s(&t.data),
        "--out-dir",
        s(&dir.join("out")),
    ]);
    assert!(err.starts_with("error[schema]"), "{err}");
    assert!(err.contains("XX"), "{err}");
}

#[test]
fn robustness_report_has_five_rows_and_is_reproducible() {
    let t = toy();
    let dir = scratch("robustness");
    let ckpt = t.model.join("checkpoint.json");
    for name in ["a", "b"] {
        ok(&[
            "robustness",
            "--checkpoint",
            s(&ckpt),
            "--data-dir",
            s(&t.data),
            "--out-dir",
            s(&dir.join(name)),
            "--seed",
            "3",
            "--config",
            &t.train_config,
        ]);
    }
    let table = std::fs::read_to_string(dir.join("a/robustness.csv")).unwrap();
    let checks: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(checks, ["sensitivity", "sensitivity", "placebo", "placebo", "baseline"]);
    assert_eq!(artifacts(&dir.join("a")), artifacts(&dir.join("b")));
}

#[test]
fn robustness_reports_missing_checkpoint() {
    let t = toy();
    let dir = scratch("robustness_missing");
    let err = fails(&[
        "robustness",
        "--checkpoint",
        s(&dir.join("nope.json")),
        "--data-dir",
        s(&t.data),
        "--out-dir",
        s(&dir.join("out")),
    ]);
    assert!(err.starts_with("error[io]"), "{err}");
    assert!(err.contains("nope.json"), "{err}");
}

#[test]
fn robustness_rejects_mismatched_config() {
    let t = toy();
    let dir = scratch("robustness_mismatch");
    let cfg = write(&dir, "train.toml", &TOY_TRAIN.replace("hidden = 8", "hidden = 12"));
    let err = fails(&[
        "robustness",
        "--checkpoint",
        s(&t.model.join("checkpoint.json")),
        "--data-dir",
        s(&t.data),
        "--out-dir",
        s(&dir.join("out")),
        "--config",
        &cfg,
    ]);
    assert!(err.starts_with("error[config]"), "{err}");
}

#[test]
fn train_divergence_exits_with_a_diagnostic() {
    let t = toy();
    let dir = scratch("train_diverge");
    let cfg = write(&dir, "train.toml", &TOY_TRAIN.replace("learning_rate = 0.003", "learning_rate = 1e300"));
    let out = dir.join("out");
    let err = fails(&["train", "--config", &cfg, "--data-dir", s(&t.data), "--out-dir", s(&out)]);
    assert!(err.starts_with("error[training]"), "{err}");
    assert!(!out.join("manifest.json").exists());
}
