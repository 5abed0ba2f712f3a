use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cbamnet::grid::{
    classify_nodes, european_subgraph, generate_synthetic, load_panel, write_graph, write_panel, CarbonClass,
    GridGraph, HourlyPanel, SyntheticSpec,
};
use cbamnet::model::Checkpoint;
use cbamnet::robustness::{robustness_report, Analysis, RobustnessConfig};
use cbamnet::scenario::{counterfactual_impacts, ImpactReport, ScenarioSet};
use cbamnet::training::{train, PreparedData, TrainConfig};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

pub const GRAPH_FILE: &str = "graph.csv";
pub const PANEL_FILE: &str = "panel.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const SCENARIO_SUMMARY_FILE: &str = "scenario_summary.csv";
pub const ROBUSTNESS_CSV_FILE: &str = "robustness.csv";
pub const ROBUSTNESS_JSON_FILE: &str = "robustness.json";
pub const SCATTER_FILE: &str = "robustness_scatter.csv";

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with `hours`, optional `edges` and a `[spec]` table.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides `spec.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory holding graph.csv and panel.csv.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides `model.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// TOML file of `[[scenario]]` tables.
    #[arg(long)]
    pub scenario_file: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training configuration the checkpoint came from; defaults are
    /// rebuilt from the checkpoint when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Seeds the placebo scrambles.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training configuration the checkpoint came from; used for the
    /// placebo retrains.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthConfig {
    hours: usize,
    /// Undirected interconnectors; the built-in European subgraph when absent.
    #[serde(default)]
    edges: Option<Vec<(String, String)>>,
    spec: SyntheticSpec,
}

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    toml::from_str(&text).map_err(|e| CliError::config(path, e.message()))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn load_data(data_dir: &Path, manifest: &mut RunManifest) -> Result<(GridGraph, HourlyPanel)> {
    let graph_path = data_dir.join(GRAPH_FILE);
    let panel_path = data_dir.join(PANEL_FILE);
    let loaded = load_panel(&graph_path, &panel_path)?;
    manifest.data(&graph_path)?;
    manifest.data(&panel_path)?;
    Ok(loaded)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg: SynthConfig = read_toml(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.spec.seed = seed;
    }
    let graph = match &cfg.edges {
        Some(edges) => GridGraph::new(cfg.spec.nodes.iter().map(|n| n.code.clone()).collect(), edges)?,
        None => european_subgraph(),
    };
    let panel = generate_synthetic(&cfg.spec, &graph, cfg.hours)?;

    prepare_out_dir(&args.out_dir)?;
    let mut manifest = RunManifest::new("synth", Some(cfg.spec.seed));
    manifest.config(&args.config)?;
    write_graph(&graph, &args.out_dir.join(GRAPH_FILE))?;
    write_panel(&panel, &args.out_dir.join(PANEL_FILE))?;
    manifest.artifact(&args.out_dir, GRAPH_FILE)?;
    manifest.artifact(&args.out_dir, PANEL_FILE)?;
    manifest.write(&args.out_dir, started.elapsed())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg: TrainConfig = read_toml(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.model.seed = seed;
    }
    let mut manifest = RunManifest::new("train", Some(cfg.model.seed));
    manifest.config(&args.config)?;
    let (graph, panel) = load_data(&args.data_dir, &mut manifest)?;
    let outcome = train(&cfg, &graph, &panel)?;

    prepare_out_dir(&args.out_dir)?;
    outcome.checkpoint(&cfg).save(&args.out_dir.join(CHECKPOINT_FILE))?;
    write_text(&args.out_dir, TRAIN_REPORT_FILE, &to_json(&outcome.report))?;
    let mut curve = String::from(
        "epoch,train_total,train_mse_ci,train_mse_price,train_corr_term,val_total,val_mse_ci,val_mse_price,val_corr_term\n",
    );
    for r in &outcome.report.epochs {
        let (t, v) = (&r.train, &r.val);
        writeln!(
            curve,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch, t.total, t.mse_ci, t.mse_price, t.corr_term, v.total, v.mse_ci, v.mse_price, v.corr_term
        )
        .unwrap();
    }
    write_text(&args.out_dir, EPOCHS_FILE, &curve)?;
    for name in [CHECKPOINT_FILE, TRAIN_REPORT_FILE, EPOCHS_FILE] {
        manifest.artifact(&args.out_dir, name)?;
    }
    manifest.write(&args.out_dir, started.elapsed())
}

/// Everything a trained checkpoint needs to be re-run on a data directory.
struct Restored {
    config: TrainConfig,
    checkpoint: Checkpoint,
    graph: GridGraph,
    panel: HourlyPanel,
    data: PreparedData,
}

fn restore(checkpoint: &Path, config: Option<&Path>, data_dir: &Path, manifest: &mut RunManifest) -> Result<Restored> {
    let ckpt = Checkpoint::load(checkpoint)?;
    manifest.data(checkpoint)?;
    let cfg = match config {
        Some(path) => {
            let mut cfg: TrainConfig = read_toml(path)?;
            manifest.config(path)?;
            // `--seed` at train time may have overridden the file's seed.
            cfg.model.seed = ckpt.config.seed;
            if cfg.model != ckpt.config || cfg.split != ckpt.split || cfg.feature_scope != ckpt.norm.scope {
                return Err(CliError::config(path, "model, split or feature scope differ from the checkpoint"));
            }
            cfg
        }
        None => {
            let mut cfg = TrainConfig::new(ckpt.config.clone());
            cfg.split = ckpt.split;
            cfg.feature_scope = ckpt.norm.scope;
            cfg
        }
    };
    let (graph, panel) = load_data(data_dir, manifest)?;
    if ckpt.norm.nodes != panel.nodes() {
        return Err(cbamnet::Error::Schema(format!(
            "checkpoint nodes {:?} do not match data nodes {:?}",
            ckpt.norm.nodes,
            panel.nodes()
        ))
        .into());
    }
    let data = PreparedData::with_norm(&cfg, ckpt.norm.clone(), &graph, &panel)?;
    Ok(Restored {
        config: cfg,
        checkpoint: ckpt,
        graph,
        panel,
        data,
    })
}

fn file_stem(label: &str) -> String {
    let mut stem = String::new();
    for c in label.chars() {
        match c {
            '%' => stem.push_str("pct"),
            c if c.is_ascii_alphanumeric() || c == '-' || c == '_' => stem.push(c),
            _ => stem.push('_'),
        }
    }
    stem
}

fn class_mean(report: &ImpactReport, class: CarbonClass) -> String {
    let values: Vec<f64> = report.nodes.iter().filter(|n| n.class == class).map(|n| n.delta_price).collect();
    if values.is_empty() {
        String::new()
    } else {
        (values.iter().sum::<f64>() / values.len() as f64).to_string()
    }
}

pub fn scenario(args: &ScenarioArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("scenario", None);
    let set = ScenarioSet::load(&args.scenario_file)?;
    manifest.config(&args.scenario_file)?;
    let r = restore(&args.checkpoint, args.config.as_deref(), &args.data_dir, &mut manifest)?;
    for s in &set.scenario {
        s.check_nodes(r.panel.nodes())?;
    }
    let classes = classify_nodes(&r.panel, &r.config.split)?;
    let hours = r.data.test_hours();
    let reports = set
        .scenario
        .iter()
        .map(|s| counterfactual_impacts(&r.checkpoint.params, &r.data, &r.panel, s, &hours, &classes))
        .collect::<cbamnet::Result<Vec<_>>>()?;

    prepare_out_dir(&args.out_dir)?;
    let summary_path = args.out_dir.join(SCENARIO_SUMMARY_FILE);
    let csv_err = |e: csv::Error| CliError::io(format!("writing {}", summary_path.display()), e.into());
    let mut summary = csv::Writer::from_path(&summary_path).map_err(csv_err)?;
    summary
        .write_record([
            "label",
            "file",
            "intensity",
            "threshold",
            "ets",
            "hours",
            "mean_delta_price",
            "mean_delta_ci",
            "low_delta_price",
            "medium_delta_price",
            "high_delta_price",
        ])
        .map_err(csv_err)?;
    let mut written = Vec::new();
    for (k, report) in reports.iter().enumerate() {
        let name = format!("impacts_{:02}_{}.csv", k + 1, file_stem(&report.scenario.label));
        report.write_csv(&args.out_dir.join(&name))?;
        let n = report.nodes.len() as f64;
        let s = &report.scenario;
        summary
            .write_record([
                s.label.clone(),
                name.clone(),
                s.intensity.to_string(),
                s.threshold.to_string(),
                s.ets.to_string(),
                report.hours.to_string(),
                (report.delta_price().iter().sum::<f64>() / n).to_string(),
                (report.delta_ci().iter().sum::<f64>() / n).to_string(),
                class_mean(report, CarbonClass::Low),
                class_mean(report, CarbonClass::Medium),
                class_mean(report, CarbonClass::High),
            ])
            .map_err(csv_err)?;
        written.push(name);
    }
    summary
        .flush()
        .map_err(|e| CliError::io(format!("writing {}", summary_path.display()), e))?;
    drop(summary);
    written.push(SCENARIO_SUMMARY_FILE.into());
    for name in &written {
        manifest.artifact(&args.out_dir, name)?;
    }
    manifest.write(&args.out_dir, started.elapsed())
}

pub fn robustness(args: &RobustnessArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("robustness", Some(args.seed));
    let r = restore(&args.checkpoint, args.config.as_deref(), &args.data_dir, &mut manifest)?;
    let analysis = Analysis::new(&r.config, &r.graph, &r.panel, &r.checkpoint.params, &r.data)?;
    let report = robustness_report(&analysis, &RobustnessConfig::new(args.seed))?;

    prepare_out_dir(&args.out_dir)?;
    report.write_csv(&args.out_dir.join(ROBUSTNESS_CSV_FILE))?;
    report.write_scatter_csv(&args.out_dir.join(SCATTER_FILE))?;
    write_text(&args.out_dir, ROBUSTNESS_JSON_FILE, &report.to_json()?)?;
    for name in [ROBUSTNESS_CSV_FILE, SCATTER_FILE, ROBUSTNESS_JSON_FILE] {
        manifest.artifact(&args.out_dir, name)?;
    }
    manifest.write(&args.out_dir, started.elapsed())
}
