use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cost::ScenarioConfig;
use super::inject::scenario_costs;
use crate::error::{Error, Result};
use crate::grid::{CarbonClass, CarbonClasses, HourlyPanel};
use crate::model::ModelParams;
use crate::training::{predict, PreparedData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeImpact {
    pub node: String,
    pub class: CarbonClass,
    /// Mean price change, EUR/MWh.
    pub delta_price: f64,
    /// Mean CI change, kg CO2/MWh.
    pub delta_ci: f64,
}

/// Per-node mean changes under a scenario relative to its intensity-0 baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub scenario: ScenarioConfig,
    /// Number of hours averaged over.
    pub hours: usize,
    pub nodes: Vec<NodeImpact>,
}

impl ImpactReport {
    pub fn delta_price(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.delta_price).collect()
    }

    pub fn delta_ci(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.delta_ci).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        let wrap = |e: csv::Error| Error::Serde(format!("{}: {e}", path.display()));
        w.write_record(["node", "class", "delta_price", "delta_ci"]).map_err(wrap)?;
        for n in &self.nodes {
            w.write_record([
                n.node.clone(),
                n.class.to_string(),
                n.delta_price.to_string(),
                n.delta_ci.to_string(),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Difference of mean natural-unit predictions between two raw policy-cost
/// series (indexed `[hour * nodes + node]`), per node, over `hours`.
pub fn impacts_between(
    params: &ModelParams,
    data: &PreparedData,
    treated_costs: &[f64],
    baseline_costs: &[f64],
    hours: &[usize],
) -> Result<Vec<(f64, f64)>> {
    if hours.is_empty() {
        return Err(Error::Contract("impact segment is empty".into()));
    }
    if !params.is_finite() {
        return Err(Error::Contract("parameters are not finite".into()));
    }
    let n = data.features.node_count();
    let mut features = data.features.clone();
    features.set_policy_costs(treated_costs, &data.norm)?;
    let (ci1, p1) = predict(params, &data.norm, &features, &data.adjacency, hours)?;
    features.set_policy_costs(baseline_costs, &data.norm)?;
    let (ci0, p0) = predict(params, &data.norm, &features, &data.adjacency, hours)?;
    let mut sums = vec![(0.0, 0.0); n];
    for k in 0..ci1.len() {
        sums[k % n].0 += p1[k] - p0[k];
        sums[k % n].1 += ci1[k] - ci0[k];
    }
    let h = hours.len() as f64;
    Ok(sums.into_iter().map(|(p, c)| (p / h, c / h)).collect())
}

/// Runs the model under `scenario` and under its intensity-0 baseline and
/// reports per-node mean differences over `hours`.
pub fn counterfactual_impacts(
    params: &ModelParams,
    data: &PreparedData,
    panel: &HourlyPanel,
    scenario: &ScenarioConfig,
    hours: &[usize],
    classes: &CarbonClasses,
) -> Result<ImpactReport> {
    let treated = scenario_costs(panel, scenario)?;
    let baseline = scenario_costs(panel, &scenario.baseline_of())?;
    let deltas = impacts_between(params, data, &treated, &baseline, hours)?;
    let nodes = panel
        .nodes()
        .iter()
        .zip(deltas)
        .map(|(code, (dp, dc))| {
            let class = *classes
                .get(code)
                .ok_or_else(|| Error::Schema(format!("no carbon class for node `{code}`")))?;
            Ok(NodeImpact {
                node: code.clone(),
                class,
                delta_price: dp,
                delta_ci: dc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpactReport {
        scenario: scenario.clone(),
        hours: hours.len(),
        nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSet {
    pub scenario: Vec<ScenarioConfig>,
}

impl ScenarioSet {
    /// Parses a TOML document of `[[scenario]]` tables.
    pub fn from_toml(text: &str) -> Result<Self> {
        let set: ScenarioSet = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if set.scenario.is_empty() {
            return Err(Error::Config("scenario set is empty".into()));
        }
        for s in &set.scenario {
            s.validate()?;
        }
        let mut labels: Vec<&str> = set.scenario.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate scenario label `{}`", w[0])));
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }
}
