use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 50.0;
pub const DEFAULT_ETS: f64 = 85.0;

/// One CBAM implementation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub label: String,
    /// Implementation phase in [0, 1].
    pub intensity: f64,
    /// CI below which no cost applies, kg CO2/MWh.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Carbon price, EUR/tCO2.
    #[serde(default = "default_ets")]
    pub ets: f64,
    /// Exporters the cost applies to; all nodes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<String>>,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_ets() -> f64 {
    DEFAULT_ETS
}

impl ScenarioConfig {
    pub fn new(label: impl Into<String>, intensity: f64) -> Self {
        Self {
            label: label.into(),
            intensity,
            threshold: DEFAULT_THRESHOLD,
            ets: DEFAULT_ETS,
            nodes: None,
        }
    }

    /// Scenario for an implementation share given in percent (0, 25, ... 100).
    pub fn from_percent(percent: u32) -> Self {
        Self::new(format!("{percent}%"), f64::from(percent) / 100.0)
    }

    /// Full implementation at the reference threshold and ETS price.
    pub fn reference() -> Self {
        Self::from_percent(100)
    }

    /// The no-CBAM counterfactual with this scenario's threshold and price.
    pub fn baseline_of(&self) -> Self {
        Self {
            label: "0%".into(),
            intensity: 0.0,
            ..self.clone()
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_ets(mut self, ets: f64) -> Self {
        self.ets = ets;
        self
    }

    /// Whether the cost applies to `node`.
    pub fn covers(&self, node: &str) -> bool {
        self.nodes.as_ref().is_none_or(|list| list.iter().any(|n| n == node))
    }

    /// Fails with a schema error if the node list names a node not in `known`.
    pub fn check_nodes(&self, known: &[String]) -> Result<()> {
        for n in self.nodes.iter().flatten() {
            if !known.contains(n) {
                return Err(Error::Schema(format!("scenario `{}` names unknown node `{n}`", self.label)));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::Config(format!(
                "scenario `{}`: intensity {} outside [0, 1]",
                self.label, self.intensity
            )));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "scenario `{}`: threshold must be >= 0",
                self.label
            )));
        }
        if !(self.ets >= 0.0 && self.ets.is_finite()) {
            return Err(Error::Config(format!("scenario `{}`: ETS price must be >= 0", self.label)));
        }
        Ok(())
    }
}

/// The five linear implementation steps 0%, 25%, 50%, 75%, 100%.
pub fn standard_scenarios() -> Vec<ScenarioConfig> {
    [0, 25, 50, 75, 100].into_iter().map(ScenarioConfig::from_percent).collect()
}

/// CBAM cost in EUR/MWh for an exporter at carbon intensity `ci` (kg CO2/MWh):
/// `max(0, ci - threshold) * intensity * ets / 1000`.
pub fn cbam_cost(ci: f64, scenario: &ScenarioConfig) -> f64 {
    cbam_cost_at(ci, scenario.intensity, scenario.threshold, scenario.ets)
}

pub fn cbam_cost_at(ci: f64, intensity: f64, threshold: f64, ets: f64) -> f64 {
    (ci - threshold).max(0.0) * intensity * ets / 1000.0
}
