use crate::error::{Error, Result};
use crate::grid::{FeatureSet, GridGraph, HourlyPanel, NormStats};

use super::cost::{cbam_cost, cbam_cost_at, ScenarioConfig};

/// Raw CBAM cost (EUR/MWh) of every node-hour under `scenario`, computed from
/// each node's own observed CI, indexed `[hour * nodes + node]`. Nodes the
/// scenario does not cover get zero cost.
pub fn scenario_costs(panel: &HourlyPanel, scenario: &ScenarioConfig) -> Result<Vec<f64>> {
    scenario.validate()?;
    scenario.check_nodes(panel.nodes())?;
    let n = panel.node_count();
    let mut out = vec![0.0; panel.len() * n];
    for i in 0..n {
        if !scenario.covers(&panel.nodes()[i]) {
            continue;
        }
        for (t, &ci) in panel.series(i).ci.iter().enumerate() {
            out[t * n + i] = cbam_cost(ci, scenario);
        }
    }
    Ok(out)
}

/// Raw cost implied by the panel's own hourly policy labels at the
/// threshold and ETS price of `pricing`; all zero for unlabelled panels.
pub fn observed_costs(panel: &HourlyPanel, pricing: &ScenarioConfig) -> Vec<f64> {
    let n = panel.node_count();
    let mut out = vec![0.0; panel.len() * n];
    for i in 0..n {
        let s = panel.series(i);
        if let Some(labels) = &s.policy_intensity {
            for (t, (&ci, &level)) in s.ci.iter().zip(labels).enumerate() {
                out[t * n + i] = cbam_cost_at(ci, level, pricing.threshold, pricing.ets);
            }
        }
    }
    out
}

/// Node features with the policy slot filled from `scenario`.
pub fn inject_policy(
    panel: &HourlyPanel,
    graph: &GridGraph,
    scenario: &ScenarioConfig,
    stats: &NormStats,
) -> Result<FeatureSet> {
    if graph.nodes() != panel.nodes() {
        return Err(Error::Schema(format!(
            "graph nodes {:?} do not match panel nodes {:?}",
            graph.nodes(),
            panel.nodes()
        )));
    }
    let mut set = FeatureSet::build(panel, stats)?;
    set.set_policy_costs(&scenario_costs(panel, scenario)?, stats)?;
    Ok(set)
}
