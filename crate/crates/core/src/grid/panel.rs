use std::ops::Range;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};

/// Generation source categories, in column order.
pub const GEN_SOURCES: [&str; 7] = ["coal", "gas", "nuclear", "hydro", "wind", "solar", "other"];

/// Number of exogenous per-node features (demand, 7 generation sources, net imports).
pub const BASE_FEATURES: usize = 9;

/// Exogenous feature names in the order `HourlyPanel::base_features` emits them.
pub fn base_feature_names() -> Vec<String> {
    let mut names = vec!["demand".to_string()];
    names.extend(GEN_SOURCES.iter().map(|s| format!("gen_{s}")));
    names.push("net_imports".to_string());
    names
}

/// Hourly series for one node. All vectors share the panel's time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSeries {
    /// MW
    pub demand: Vec<f64>,
    /// MW per source, indexed like [`GEN_SOURCES`].
    pub generation: [Vec<f64>; 7],
    /// MW, positive when importing.
    pub net_imports: Vec<f64>,
    /// Day-ahead price, EUR/MWh.
    pub price: Vec<f64>,
    /// Carbon intensity, kg CO2/MWh.
    pub ci: Vec<f64>,
    /// Optional per-hour policy intensity label in [0, 1] (synthetic panels).
    pub policy_intensity: Option<Vec<f64>>,
}

impl NodeSeries {
    pub fn with_len(len: usize) -> Self {
        Self {
            demand: vec![0.0; len],
            generation: std::array::from_fn(|_| vec![0.0; len]),
            net_imports: vec![0.0; len],
            price: vec![0.0; len],
            ci: vec![0.0; len],
            policy_intensity: None,
        }
    }

    fn check(&self, code: &str, len: usize) -> Result<()> {
        let columns = std::iter::once(("demand", &self.demand))
            .chain(GEN_SOURCES.iter().copied().zip(self.generation.iter()))
            .chain([("net_imports", &self.net_imports), ("price", &self.price), ("ci", &self.ci)])
            .chain(self.policy_intensity.iter().map(|p| ("policy_intensity", p)));
        for (name, col) in columns {
            if col.len() != len {
                return Err(Error::Integrity(format!(
                    "{code}_{name} has {} values for {len} timestamps",
                    col.len()
                )));
            }
            if let Some(t) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Integrity(format!("{code}_{name} is not finite at row {t}")));
            }
        }
        for (name, col) in GEN_SOURCES.iter().zip(self.generation.iter()) {
            if let Some(t) = col.iter().position(|&v| v < 0.0) {
                return Err(Error::Integrity(format!("{code}_gen_{name} is negative at row {t}")));
            }
        }
        if let Some(t) = self.ci.iter().position(|&v| v < 0.0) {
            return Err(Error::Integrity(format!("{code}_ci is negative at row {t}")));
        }
        if let Some(p) = &self.policy_intensity {
            if let Some(t) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Integrity(format!(
                    "{code}_policy_intensity outside [0, 1] at row {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-node hourly feature and target series on a shared, gap-free time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyPanel {
    timestamps: Vec<DateTime<Utc>>,
    nodes: Vec<String>,
    series: Vec<NodeSeries>,
}

impl HourlyPanel {
    pub fn new(timestamps: Vec<DateTime<Utc>>, nodes: Vec<String>, series: Vec<NodeSeries>) -> Result<Self> {
        if nodes.len() != series.len() {
            return Err(Error::Schema(format!(
                "{} node codes but {} series",
                nodes.len(),
                series.len()
            )));
        }
        check_hourly_axis(&timestamps)?;
        for (code, s) in nodes.iter().zip(&series) {
            s.check(code, timestamps.len())?;
        }
        let labelled = series.iter().filter(|s| s.policy_intensity.is_some()).count();
        if labelled != 0 && labelled != series.len() {
            return Err(Error::Schema(
                "policy intensity labels must be present for every node or none".into(),
            ));
        }
        Ok(Self {
            timestamps,
            nodes,
            series,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn series(&self, node: usize) -> &NodeSeries {
        &self.series[node]
    }

    pub fn all_series(&self) -> &[NodeSeries] {
        &self.series
    }

    pub fn has_policy_labels(&self) -> bool {
        self.series.first().is_some_and(|s| s.policy_intensity.is_some())
    }

    pub fn base_features(&self, node: usize, hour: usize) -> [f64; BASE_FEATURES] {
        let s = &self.series[node];
        let mut out = [0.0; BASE_FEATURES];
        out[0] = s.demand[hour];
        for (k, g) in s.generation.iter().enumerate() {
            out[1 + k] = g[hour];
        }
        out[8] = s.net_imports[hour];
        out
    }

    /// Reorders nodes so that new node `k` is old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let nodes = order.iter().map(|&o| self.nodes[o].clone()).collect();
        let series = order.iter().map(|&o| self.series[o].clone()).collect();
        Self::new(self.timestamps.clone(), nodes, series)
    }

    /// Copy with the node order of `codes`; fails on unknown or missing codes.
    pub fn reordered(&self, codes: &[String]) -> Result<Self> {
        if codes.len() != self.nodes.len() {
            return Err(Error::Schema(format!(
                "expected {} nodes, got {}",
                self.nodes.len(),
                codes.len()
            )));
        }
        let order = codes
            .iter()
            .map(|c| {
                self.nodes
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::Schema(format!("panel has no node `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.permuted(&order)
    }

    pub fn view(&self, range: Range<usize>) -> PanelView<'_> {
        PanelView { panel: self, range }
    }
}

fn check_hourly_axis(ts: &[DateTime<Utc>]) -> Result<()> {
    for (i, pair) in ts.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if step.num_seconds() == 0 {
            return Err(Error::Integrity(format!(
                "duplicate timestamp {} at rows {} and {}",
                pair[0].to_rfc3339(),
                i,
                i + 1
            )));
        }
        if step.num_seconds() != 3600 {
            return Err(Error::Integrity(format!(
                "timestamp gap between {} (row {}) and {} (row {}): step of {} s",
                pair[0].to_rfc3339(),
                i,
                pair[1].to_rfc3339(),
                i + 1,
                step.num_seconds()
            )));
        }
    }
    Ok(())
}

/// A contiguous slice of a panel's time axis.
#[derive(Debug, Clone)]
pub struct PanelView<'a> {
    pub panel: &'a HourlyPanel,
    pub range: Range<usize>,
}

impl PanelView<'_> {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Chronological train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

/// Index ranges of the three segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !f.is_finite() || f < 0.0 {
                return Err(Error::Config(format!("{name} fraction must be non-negative, got {f}")));
            }
            if f > 1.0 {
                return Err(Error::Config(format!("{name} fraction exceeds 1: {f}")));
            }
        }
        let total = self.train + self.val + self.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Train and validation lengths are `floor(fraction * len)`; the test
    /// segment receives the remainder.
    pub fn ranges(&self, len: usize) -> Result<SplitRanges> {
        self.validate()?;
        let cut = |f: f64| ((f * len as f64) + 1e-9).floor() as usize;
        let train_end = cut(self.train).min(len);
        let val_end = (train_end + cut(self.val)).min(len);
        Ok(SplitRanges {
            train: 0..train_end,
            val: train_end..val_end,
            test: val_end..len,
        })
    }
}

/// Splits a panel into contiguous, ordered train / validation / test views.
pub fn chronological_split<'a>(
    panel: &'a HourlyPanel,
    spec: &SplitSpec,
) -> Result<(PanelView<'a>, PanelView<'a>, PanelView<'a>)> {
    let r = spec.ranges(panel.len())?;
    Ok((panel.view(r.train), panel.view(r.val), panel.view(r.test)))
}
