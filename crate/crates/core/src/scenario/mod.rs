//! CBAM cost scenarios, policy-feature injection and counterfactual impacts.

pub mod cost;
pub mod impacts;
pub mod inject;

pub use cost::{cbam_cost, cbam_cost_at, standard_scenarios, ScenarioConfig, DEFAULT_ETS, DEFAULT_THRESHOLD};
pub use impacts::{counterfactual_impacts, impacts_between, ImpactReport, NodeImpact, ScenarioSet};
pub use inject::{inject_policy, observed_costs, scenario_costs};

#[cfg(test)]
mod tests;
