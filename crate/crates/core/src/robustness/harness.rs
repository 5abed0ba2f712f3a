//! Orchestration of the robustness table: sensitivity sweeps, placebos and
//! the spatial-lag comparison for one trained model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{attenuation, compare, RobustnessMetrics};
use super::placebo::{PlaceboKind, PlaceboMode, Scramble};
use super::spatial_lag::{fit_spatial_lag, FittedBaseline};
use crate::error::{Error, Result};
use crate::grid::{classify_nodes, CarbonClasses, GridGraph, HourlyPanel};
use crate::model::ModelParams;
use crate::scenario::{impacts_between, observed_costs, scenario_costs, ScenarioConfig};
use crate::training::{train_prepared, PreparedData, TrainConfig, TrainHooks};

pub const THRESHOLD_SWEEP: [f64; 3] = [25.0, 50.0, 75.0];
pub const ETS_SWEEP: [f64; 3] = [70.0, 85.0, 100.0];

/// A trained model together with everything needed to re-run it.
pub struct Analysis<'a> {
    pub config: &'a TrainConfig,
    pub graph: &'a GridGraph,
    pub panel: &'a HourlyPanel,
    pub params: &'a ModelParams,
    pub data: &'a PreparedData,
    pub classes: CarbonClasses,
    /// Hours the impacts are averaged over; the test segment by default.
    pub hours: Vec<usize>,
}

impl<'a> Analysis<'a> {
    pub fn new(
        config: &'a TrainConfig,
        graph: &'a GridGraph,
        panel: &'a HourlyPanel,
        params: &'a ModelParams,
        data: &'a PreparedData,
    ) -> Result<Self> {
        let classes = classify_nodes(panel, &config.split)?;
        let hours = data.test_hours();
        if hours.is_empty() {
            return Err(Error::Range("test segment has no usable hours".into()));
        }
        Ok(Self {
            config,
            graph,
            panel,
            params,
            data,
            classes,
            hours,
        })
    }

    /// Per-node mean price change of `scenario` against its intensity-0
    /// counterpart.
    pub fn price_impacts(&self, scenario: &ScenarioConfig) -> Result<Vec<f64>> {
        let treated = scenario_costs(self.panel, scenario)?;
        let baseline = scenario_costs(self.panel, &scenario.baseline_of())?;
        self.price_impacts_between(self.params, self.data, &treated, &baseline)
    }

    fn price_impacts_between(
        &self,
        params: &ModelParams,
        data: &PreparedData,
        treated: &[f64],
        baseline: &[f64],
    ) -> Result<Vec<f64>> {
        Ok(impacts_between(params, data, treated, baseline, &self.hours)?
            .into_iter()
            .map(|(dp, _)| dp)
            .collect())
    }

    /// Observed-cost series the model was trained on.
    pub fn observed_costs(&self) -> Vec<f64> {
        observed_costs(self.panel, &self.config.policy_reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Threshold,
    Ets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSetting {
    pub value: f64,
    pub delta_price: Vec<f64>,
    pub metrics: RobustnessMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub reference: ScenarioConfig,
    pub reference_delta: Vec<f64>,
    pub settings: Vec<SweepSetting>,
}

impl SweepResult {
    /// Mean metrics over the settings that differ from the reference.
    pub fn summary(&self) -> RobustnessMetrics {
        let off: Vec<&SweepSetting> = self
            .settings
            .iter()
            .filter(|s| s.value != axis_value(self.axis, &self.reference))
            .collect();
        let rows = if off.is_empty() { self.settings.iter().collect() } else { off };
        let k = rows.len() as f64;
        RobustnessMetrics {
            sign_agree: rows.iter().map(|s| s.metrics.sign_agree).sum::<f64>() / k,
            rank_corr: rows.iter().map(|s| s.metrics.rank_corr).sum::<f64>() / k,
            attenuation: None,
        }
    }
}

fn axis_value(axis: SweepAxis, s: &ScenarioConfig) -> f64 {
    match axis {
        SweepAxis::Threshold => s.threshold,
        SweepAxis::Ets => s.ets,
    }
}

/// Recomputes impacts with the threshold or ETS price of `reference` moved
/// to each of `values` and compares them with the reference impacts.
pub fn sensitivity_sweep(
    analysis: &Analysis<'_>,
    reference: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<SweepResult> {
    let reference_delta = analysis.price_impacts(reference)?;
    let settings = values
        .iter()
        .map(|&value| {
            let scenario = match axis {
                SweepAxis::Threshold => reference.clone().with_threshold(value),
                SweepAxis::Ets => reference.clone().with_ets(value),
            };
            let delta_price = analysis.price_impacts(&scenario)?;
            let metrics = compare(&reference_delta, &delta_price)?;
            Ok(SweepSetting {
                value,
                delta_price,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis,
        reference: reference.clone(),
        reference_delta,
        settings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboResult {
    pub kind: PlaceboKind,
    pub mode: PlaceboMode,
    pub seed: u64,
    pub reference_delta: Vec<f64>,
    pub delta_price: Vec<f64>,
    pub metrics: RobustnessMetrics,
}

/// Scrambles the policy cost with `scramble` and recomputes the impacts of
/// `scenario`. In retrain mode the observed training costs are scrambled the
/// same way and the model is refitted before evaluation.
pub fn run_placebo(
    analysis: &Analysis<'_>,
    scenario: &ScenarioConfig,
    scramble: &Scramble,
    mode: PlaceboMode,
    seed: u64,
) -> Result<PlaceboResult> {
    let n = analysis.panel.node_count();
    let reference_delta = analysis.price_impacts(scenario)?;
    let treated = scramble.apply(&scenario_costs(analysis.panel, scenario)?, n)?;
    let baseline = scramble.apply(&scenario_costs(analysis.panel, &scenario.baseline_of())?, n)?;
    let delta_price = match mode {
        PlaceboMode::Evaluate => analysis.price_impacts_between(analysis.params, analysis.data, &treated, &baseline)?,
        PlaceboMode::Retrain => {
            let mut data = analysis.data.clone();
            let observed = scramble.apply(&analysis.observed_costs(), n)?;
            data.features.set_policy_costs(&observed, &data.norm)?;
            let outcome = train_prepared(analysis.config, &data, analysis.panel, &mut TrainHooks::default())?;
            analysis.price_impacts_between(&outcome.params, &data, &treated, &baseline)?
        }
    };
    let mut metrics = compare(&reference_delta, &delta_price)?;
    metrics.attenuation = Some(attenuation(&delta_price, &reference_delta)?);
    Ok(PlaceboResult {
        kind: scramble.kind(),
        mode,
        seed,
        reference_delta,
        delta_price,
        metrics,
    })
}

/// Per-node independent shuffle of the cost series over time.
pub fn placebo_time(
    analysis: &Analysis<'_>,
    scenario: &ScenarioConfig,
    seed: u64,
    mode: PlaceboMode,
) -> Result<PlaceboResult> {
    let scramble = Scramble::time(analysis.panel.node_count(), analysis.panel.len(), seed);
    run_placebo(analysis, scenario, &scramble, mode, seed)
}

/// Seeded derangement of the cost series across nodes.
pub fn placebo_node(
    analysis: &Analysis<'_>,
    scenario: &ScenarioConfig,
    seed: u64,
    mode: PlaceboMode,
) -> Result<PlaceboResult> {
    let scramble = Scramble::node(analysis.panel.node_count(), seed);
    run_placebo(analysis, scenario, &scramble, mode, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub node: String,
    pub gnn_delta: f64,
    pub baseline_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub metrics: RobustnessMetrics,
    pub points: Vec<ScatterPoint>,
}

/// Agreement between two impact vectors over the same nodes.
pub fn compare_models(nodes: &[String], gnn: &[f64], baseline: &[f64]) -> Result<ModelComparison> {
    if nodes.len() != gnn.len() {
        return Err(Error::Contract(format!(
            "{} node codes for {} impacts",
            nodes.len(),
            gnn.len()
        )));
    }
    let metrics = compare(gnn, baseline)?;
    let points = nodes
        .iter()
        .zip(gnn.iter().zip(baseline))
        .map(|(node, (&g, &b))| ScatterPoint {
            node: node.clone(),
            gnn_delta: g,
            baseline_delta: b,
        })
        .collect();
    Ok(ModelComparison { metrics, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub baseline: FittedBaseline,
    pub test_rmse: f64,
    pub delta_price: Vec<f64>,
    pub comparison: ModelComparison,
}

/// Fits the spatial-lag baseline on the training segment with observed
/// costs, then compares its scenario impacts with the model's.
pub fn baseline_comparison(analysis: &Analysis<'_>, scenario: &ScenarioConfig) -> Result<BaselineResult> {
    let observed = analysis.observed_costs();
    let baseline = fit_spatial_lag(
        analysis.panel,
        analysis.graph,
        &analysis.classes,
        &observed,
        analysis.data.ranges.train.clone(),
    )?;
    let test_rmse = baseline.rmse(analysis.panel, &observed, &analysis.hours)?;
    let treated = scenario_costs(analysis.panel, scenario)?;
    let untreated = scenario_costs(analysis.panel, &scenario.baseline_of())?;
    let delta_price = baseline.impacts(analysis.panel, &treated, &untreated, &analysis.hours)?;
    let gnn = analysis.price_impacts(scenario)?;
    let comparison = compare_models(analysis.panel.nodes(), &gnn, &delta_price)?;
    Ok(BaselineResult {
        baseline,
        test_rmse,
        delta_price,
        comparison,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub seed: u64,
    #[serde(default)]
    pub placebo_mode: PlaceboMode,
    #[serde(default = "ScenarioConfig::reference")]
    pub scenario: ScenarioConfig,
}

impl RobustnessConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            placebo_mode: PlaceboMode::default(),
            scenario: ScenarioConfig::reference(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub check: String,
    pub design: String,
    pub metrics: RobustnessMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub config: RobustnessConfig,
    pub nodes: Vec<String>,
    pub hours: usize,
    pub rows: Vec<ReportRow>,
    pub threshold: SweepResult,
    pub ets: SweepResult,
    pub placebo_time: PlaceboResult,
    pub placebo_node: PlaceboResult,
    pub baseline: BaselineResult,
}

/// Runs the two sweeps, both placebos and the baseline comparison.
pub fn robustness_report(analysis: &Analysis<'_>, config: &RobustnessConfig) -> Result<RobustnessReport> {
    let scenario = &config.scenario;
    let threshold = sensitivity_sweep(analysis, scenario, SweepAxis::Threshold, &THRESHOLD_SWEEP)?;
    let ets = sensitivity_sweep(analysis, scenario, SweepAxis::Ets, &ETS_SWEEP)?;
    let time = placebo_time(analysis, scenario, config.seed, config.placebo_mode)?;
    let node = placebo_node(analysis, scenario, config.seed, config.placebo_mode)?;
    let baseline = baseline_comparison(analysis, scenario)?;
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("/");
    let rows = vec![
        ReportRow {
            check: "sensitivity".into(),
            design: format!("threshold in {{{}}}", list(&THRESHOLD_SWEEP)),
            metrics: threshold.summary(),
        },
        ReportRow {
            check: "sensitivity".into(),
            design: format!("ets in {{{}}}", list(&ETS_SWEEP)),
            metrics: ets.summary(),
        },
        ReportRow {
            check: "placebo".into(),
            design: PlaceboKind::Time.describe().into(),
            metrics: time.metrics,
        },
        ReportRow {
            check: "placebo".into(),
            design: PlaceboKind::Node.describe().into(),
            metrics: node.metrics,
        },
        ReportRow {
            check: "baseline".into(),
            design: "spatial-lag panel".into(),
            metrics: baseline.comparison.metrics,
        },
    ];
    Ok(RobustnessReport {
        config: config.clone(),
        nodes: analysis.panel.nodes().to_vec(),
        hours: analysis.hours.len(),
        rows,
        threshold,
        ets,
        placebo_time: time,
        placebo_node: node,
        baseline,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Serde(format!("{}: {e}", path.display()))
}

impl RobustnessReport {
    /// Summary table: check, design, sign_agree, rank_corr, attenuation
    /// (empty for non-placebo rows).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(["check", "design", "sign_agree", "rank_corr", "attenuation"])
            .map_err(csv_err(path))?;
        for r in &self.rows {
            w.write_record([
                r.check.clone(),
                r.design.clone(),
                r.metrics.sign_agree.to_string(),
                r.metrics.rank_corr.to_string(),
                r.metrics.attenuation.map(|a| a.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn write_scatter_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(["node", "gnn_delta", "baseline_delta"]).map_err(csv_err(path))?;
        for p in &self.baseline.comparison.points {
            w.write_record([p.node.clone(), p.gnn_delta.to_string(), p.baseline_delta.to_string()])
                .map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }
}
