use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::panel::{HourlyPanel, SplitSpec};
use crate::error::{Error, Result};

pub const LOW_CARBON_BELOW: f64 = 50.0;
pub const HIGH_CARBON_ABOVE: f64 = 130.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarbonClass {
    Low,
    Medium,
    High,
}

impl CarbonClass {
    /// Low is `ci < 50`, Medium `50 <= ci <= 130`, High `ci > 130` (kg CO2/MWh).
    pub fn from_mean_ci(ci: f64) -> Self {
        if ci < LOW_CARBON_BELOW {
            CarbonClass::Low
        } else if ci <= HIGH_CARBON_ABOVE {
            CarbonClass::Medium
        } else {
            CarbonClass::High
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CarbonClass::Low => "low",
            CarbonClass::Medium => "medium",
            CarbonClass::High => "high",
        }
    }
}

impl fmt::Display for CarbonClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Carbon class per node code.
pub type CarbonClasses = BTreeMap<String, CarbonClass>;

/// Assigns each node by its mean carbon intensity over the training segment.
pub fn classify_nodes(panel: &HourlyPanel, split: &SplitSpec) -> Result<CarbonClasses> {
    let train = split.ranges(panel.len())?.train;
    if train.is_empty() {
        return Err(Error::Contract("training segment is empty".into()));
    }
    Ok(panel
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, code)| {
            let ci = &panel.series(i).ci[train.clone()];
            let mean = ci.iter().sum::<f64>() / ci.len() as f64;
            (code.clone(), CarbonClass::from_mean_ci(mean))
        })
        .collect())
}
