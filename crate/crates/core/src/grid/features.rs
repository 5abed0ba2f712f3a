//! Per-hour node feature tensors and normalization.
//!
//! Column layout for a window of `w` hours:
//!
//! | columns            | content                                         |
//! |--------------------|-------------------------------------------------|
//! | `0..9`             | current-hour demand, generation mix, net imports |
//! | `9..9+w`           | price at `t-1 ..= t-w`                          |
//! | `9+w..9+2w`        | CI at `t-1 ..= t-w`                             |
//! | next 4             | hour-of-day sin/cos, day-of-week sin/cos        |
//! | last               | injected policy cost                            |
//!
//! All columns but the last are z-scored with statistics pooled over nodes
//! and hours of the training segment. The policy slot has its own scalar
//! statistics, set from the full-intensity reference scenario.

use std::f64::consts::PI;
use std::ops::Range;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::panel::{base_feature_names, HourlyPanel, BASE_FEATURES};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scenario::{cbam_cost, ScenarioConfig};

pub const CALENDAR_FEATURES: usize = 4;

/// Standard deviations at or below this are treated as zero variance.
const VARIANCE_FLOOR: f64 = 1e-12;

/// Per-node feature length for `base` exogenous columns and a lag window.
pub fn feature_width(base: usize, window: usize) -> usize {
    base + 2 * window + CALENDAR_FEATURES + 1
}

pub fn feature_names(window: usize) -> Vec<String> {
    let mut names = base_feature_names();
    names.extend((1..=window).map(|k| format!("price_lag{k}")));
    names.extend((1..=window).map(|k| format!("ci_lag{k}")));
    names.extend(["hour_sin", "hour_cos", "dow_sin", "dow_cos", "policy_cost"].map(String::from));
    names
}

pub fn calendar_encoding(ts: &DateTime<Utc>) -> [f64; CALENDAR_FEATURES] {
    let h = 2.0 * PI * f64::from(ts.hour()) / 24.0;
    let d = 2.0 * PI * f64::from(ts.weekday().num_days_from_monday()) / 7.0;
    [h.sin(), h.cos(), d.sin(), d.cos()]
}

/// Raw (unnormalized) features of `node` at `hour`, excluding the policy slot.
pub fn raw_features(panel: &HourlyPanel, node: usize, hour: usize, window: usize, out: &mut [f64]) -> Result<()> {
    if window == 0 {
        return Err(Error::Config("lag window must be >= 1".into()));
    }
    if hour < window {
        return Err(Error::Range(format!("hour {hour} precedes the lag window of {window}")));
    }
    if hour >= panel.len() {
        return Err(Error::Range(format!("hour {hour} beyond panel of {} hours", panel.len())));
    }
    let width = feature_width(BASE_FEATURES, window) - 1;
    if out.len() != width {
        return Err(Error::Contract(format!("feature buffer has {} slots, need {width}", out.len())));
    }
    let s = panel.series(node);
    out[..BASE_FEATURES].copy_from_slice(&panel.base_features(node, hour));
    for k in 1..=window {
        out[BASE_FEATURES + k - 1] = s.price[hour - k];
        out[BASE_FEATURES + window + k - 1] = s.ci[hour - k];
    }
    out[BASE_FEATURES + 2 * window..].copy_from_slice(&calendar_encoding(&panel.timestamps()[hour]));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Ci,
    Price,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Which node-hours share feature statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScope {
    /// One mean and std per column over all nodes. Level differences
    /// between nodes stay visible to the model.
    #[default]
    Pooled,
    /// Separate statistics per node and column.
    PerNode,
}

/// Normalization statistics fitted on the training segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub window: usize,
    pub nodes: Vec<String>,
    pub scope: FeatureScope,
    /// `[node][column]`, every column except the policy slot. Rows are
    /// identical under [`FeatureScope::Pooled`].
    pub feature_mean: Vec<Vec<f64>>,
    /// Zero marks a zero-variance column, which normalizes to 0.
    pub feature_std: Vec<Vec<f64>>,
    pub policy_mean: f64,
    pub policy_std: f64,
    pub ci_mean: Vec<f64>,
    pub ci_std: Vec<f64>,
    pub price_mean: Vec<f64>,
    pub price_std: Vec<f64>,
}

impl NormStats {
    /// Fits on hours `train` (those at or after the lag window).
    /// `policy_reference` supplies the scenario whose costs define the
    /// policy-slot statistics.
    pub fn fit(
        panel: &HourlyPanel,
        window: usize,
        train: Range<usize>,
        policy_reference: &ScenarioConfig,
        scope: FeatureScope,
    ) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("lag window must be >= 1".into()));
        }
        let hours: Vec<usize> = train.clone().filter(|&t| t >= window && t < panel.len()).collect();
        if hours.is_empty() {
            return Err(Error::Range(format!(
                "training segment {train:?} has no hours past the lag window of {window}"
            )));
        }
        let n = panel.node_count();
        let width = feature_width(BASE_FEATURES, window) - 1;
        let mut rows = vec![0.0; hours.len() * n * width];
        for (r, &t) in hours.iter().enumerate() {
            for i in 0..n {
                let off = (r * n + i) * width;
                raw_features(panel, i, t, window, &mut rows[off..off + width])?;
            }
        }
        let count = hours.len() * n;
        let column_stats = |c: usize, node: Option<usize>| {
            let (m, s) = mean_std(
                (0..count)
                    .filter(|k| node.is_none_or(|i| k % n == i))
                    .map(|k| rows[k * width + c]),
            );
            (m, if s <= VARIANCE_FLOOR { 0.0 } else { s })
        };
        let (feature_mean, feature_std): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match scope {
            FeatureScope::Pooled => {
                let (m, s): (Vec<f64>, Vec<f64>) = (0..width).map(|c| column_stats(c, None)).unzip();
                (vec![m; n], vec![s; n])
            }
            FeatureScope::PerNode => (0..n)
                .map(|i| (0..width).map(|c| column_stats(c, Some(i))).unzip())
                .unzip(),
        };
        let (policy_mean, policy_std) = mean_std(
            hours
                .iter()
                .flat_map(|&t| (0..n).map(move |i| cbam_cost(panel.series(i).ci[t], policy_reference))),
        );
        let target_stats = |column: fn(&super::panel::NodeSeries) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
            (0..n)
                .map(|i| {
                    let values = column(panel.series(i));
                    let (m, s) = mean_std(hours.iter().map(|&t| values[t]));
                    (m, if s <= VARIANCE_FLOOR { 1.0 } else { s })
                })
                .unzip()
        };
        let (ci_mean, ci_std) = target_stats(|s| &s.ci);
        let (price_mean, price_std) = target_stats(|s| &s.price);
        Ok(Self {
            window,
            nodes: panel.nodes().to_vec(),
            scope,
            feature_mean,
            feature_std,
            policy_mean,
            policy_std: if policy_std <= VARIANCE_FLOOR { 1.0 } else { policy_std },
            ci_mean,
            ci_std,
            price_mean,
            price_std,
        })
    }

    pub fn width(&self) -> usize {
        self.feature_mean.first().map_or(0, Vec::len) + 1
    }

    pub fn normalize_feature(&self, node: usize, column: usize, x: f64) -> f64 {
        let s = self.feature_std[node][column];
        if s == 0.0 {
            0.0
        } else {
            (x - self.feature_mean[node][column]) / s
        }
    }

    pub fn normalize_policy(&self, cost: f64) -> f64 {
        (cost - self.policy_mean) / self.policy_std
    }

    pub fn normalize_target(&self, target: Target, node: usize, y: f64) -> f64 {
        let (m, s) = self.target_stats(target, node);
        (y - m) / s
    }

    pub fn denormalize_target(&self, target: Target, node: usize, z: f64) -> f64 {
        let (m, s) = self.target_stats(target, node);
        z * s + m
    }

    fn target_stats(&self, target: Target, node: usize) -> (f64, f64) {
        match target {
            Target::Ci => (self.ci_mean[node], self.ci_std[node]),
            Target::Price => (self.price_mean[node], self.price_std[node]),
        }
    }

    /// Fails unless `panel` lists the same nodes in the same order.
    pub fn check_panel(&self, panel: &HourlyPanel) -> Result<()> {
        if panel.nodes() != self.nodes.as_slice() {
            return Err(Error::Schema(format!(
                "normalization fitted on nodes {:?}, panel has {:?}",
                self.nodes,
                panel.nodes()
            )));
        }
        Ok(())
    }
}

/// Normalized node features at `hour`, one row per node, with the policy slot
/// set to the normalized value of a zero cost.
pub fn feature_matrix(panel: &HourlyPanel, stats: &NormStats, hour: usize) -> Result<Tensor> {
    stats.check_panel(panel)?;
    let n = panel.node_count();
    let width = stats.width();
    let mut out = Tensor::zeros(n, width);
    let mut raw = vec![0.0; width - 1];
    for i in 0..n {
        raw_features(panel, i, hour, stats.window, &mut raw)?;
        for (c, &x) in raw.iter().enumerate() {
            out.set(i, c, stats.normalize_feature(i, c, x));
        }
        out.set(i, width - 1, stats.normalize_policy(0.0));
    }
    Ok(out)
}

/// Precomputed normalized features and targets for every hour of a panel.
///
/// Hours before the lag window have no features; asking for them is a range
/// error. The policy column is stored separately so scenarios can swap it
/// without rebuilding the rest.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    window: usize,
    nodes: usize,
    hours: usize,
    width: usize,
    features: Vec<f64>,
    policy: Vec<f64>,
    ci: Vec<f64>,
    price: Vec<f64>,
}

impl FeatureSet {
    /// Builds with the policy slot at zero cost.
    pub fn build(panel: &HourlyPanel, stats: &NormStats) -> Result<Self> {
        stats.check_panel(panel)?;
        let n = panel.node_count();
        let hours = panel.len();
        let inner = stats.width() - 1;
        let mut features = vec![0.0; hours * n * inner];
        for t in stats.window..hours {
            for i in 0..n {
                let off = (t * n + i) * inner;
                let row = &mut features[off..off + inner];
                raw_features(panel, i, t, stats.window, row)?;
                for (c, x) in row.iter_mut().enumerate() {
                    *x = stats.normalize_feature(i, c, *x);
                }
            }
        }
        let mut ci = vec![0.0; hours * n];
        let mut price = vec![0.0; hours * n];
        for t in 0..hours {
            for i in 0..n {
                let s = panel.series(i);
                ci[t * n + i] = stats.normalize_target(Target::Ci, i, s.ci[t]);
                price[t * n + i] = stats.normalize_target(Target::Price, i, s.price[t]);
            }
        }
        Ok(Self {
            window: stats.window,
            nodes: n,
            hours,
            width: stats.width(),
            features,
            policy: vec![stats.normalize_policy(0.0); hours * n],
            ci,
            price,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Replaces the policy column; `raw` holds costs in EUR/MWh indexed
    /// `[hour * nodes + node]`.
    pub fn set_policy_costs(&mut self, raw: &[f64], stats: &NormStats) -> Result<()> {
        if raw.len() != self.policy.len() {
            return Err(Error::Contract(format!(
                "policy cost series has {} values, expected {}",
                raw.len(),
                self.policy.len()
            )));
        }
        for (dst, &c) in self.policy.iter_mut().zip(raw) {
            *dst = stats.normalize_policy(c);
        }
        Ok(())
    }

    /// Normalized policy column, indexed like [`Self::set_policy_costs`].
    pub fn policy_column(&self) -> &[f64] {
        &self.policy
    }

    /// Sets the policy column to an already-normalized value everywhere.
    pub fn fill_policy(&mut self, value: f64) {
        self.policy.fill(value);
    }

    fn check_hour(&self, t: usize) -> Result<()> {
        if t < self.window || t >= self.hours {
            return Err(Error::Range(format!(
                "hour {t} outside usable range {}..{}",
                self.window, self.hours
            )));
        }
        Ok(())
    }

    /// Stacks the node features of `hours` into a `(hours.len() * nodes) x width`
    /// matrix, hour-major.
    pub fn batch(&self, hours: &[usize]) -> Result<Tensor> {
        let n = self.nodes;
        let inner = self.width - 1;
        let mut data = Vec::with_capacity(hours.len() * n * self.width);
        for &t in hours {
            self.check_hour(t)?;
            for i in 0..n {
                let off = (t * n + i) * inner;
                data.extend_from_slice(&self.features[off..off + inner]);
                data.push(self.policy[t * n + i]);
            }
        }
        Tensor::new(hours.len() * n, self.width, data)
    }

    /// Normalized targets for `hours`, hour-major, as column vectors.
    pub fn targets(&self, hours: &[usize]) -> Result<(Tensor, Tensor)> {
        let n = self.nodes;
        let mut ci = Vec::with_capacity(hours.len() * n);
        let mut price = Vec::with_capacity(hours.len() * n);
        for &t in hours {
            self.check_hour(t)?;
            ci.extend_from_slice(&self.ci[t * n..(t + 1) * n]);
            price.extend_from_slice(&self.price[t * n..(t + 1) * n]);
        }
        Ok((Tensor::column(ci), Tensor::column(price)))
    }

    /// Usable hours of `range` (those at or after the lag window).
    pub fn usable_hours(&self, range: Range<usize>) -> Vec<usize> {
        range.filter(|&t| t >= self.window && t < self.hours).collect()
    }
}

#[cfg(test)]
mod tests {
    use chrono::TimeZone;

    use super::*;
    use crate::grid::panel::NodeSeries;

    fn panel(len: usize, nodes: usize) -> HourlyPanel {
        let start = Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap();
        let ts = (0..len).map(|h| start + chrono::Duration::hours(h as i64)).collect();
        let codes = (0..nodes).map(|i| format!("N{i}")).collect();
        let series = (0..nodes)
            .map(|i| {
                let mut s = NodeSeries::with_len(len);
                for t in 0..len {
                    let x = (t as f64 * 0.37 + i as f64).sin();
                    s.demand[t] = 1000.0 + 100.0 * x + 10.0 * i as f64;
                    s.generation[0][t] = 300.0 + 30.0 * x * x;
                    s.generation[6][t] = 5.0; // constant column
                    s.price[t] = 50.0 + 10.0 * x + t as f64 * 0.01;
                    s.ci[t] = 100.0 + 60.0 * (t as f64 * 0.11).cos() + 40.0 * i as f64;
                }
                s
            })
            .collect();
        HourlyPanel::new(ts, codes, series).unwrap()
    }

    #[test]
    fn width_counts_declared_layout() {
        assert_eq!(feature_width(3, 1), 10);
        assert_eq!(feature_width(BASE_FEATURES, 24), 9 + 48 + 5);
        assert_eq!(feature_names(24).len(), feature_width(BASE_FEATURES, 24));
    }

    #[test]
    fn hour_before_window_is_range_error() {
        let p = panel(50, 2);
        let stats = NormStats::fit(&p, 3, 0..40, &ScenarioConfig::reference(), FeatureScope::PerNode).unwrap();
        assert!(matches!(feature_matrix(&p, &stats, 2), Err(Error::Range(_))));
        assert!(feature_matrix(&p, &stats, 3).is_ok());
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let p = panel(60, 3);
        let stats = NormStats::fit(&p, 2, 0..40, &ScenarioConfig::reference(), FeatureScope::PerNode).unwrap();
        assert!(stats.feature_std.iter().all(|row| row[7] == 0.0));
        let m = feature_matrix(&p, &stats, 45).unwrap();
        for i in 0..3 {
            assert_eq!(m.get(i, 7), 0.0);
        }
    }

    #[test]
    fn default_policy_slot_is_zero_cost() {
        let p = panel(60, 2);
        let stats = NormStats::fit(&p, 2, 0..40, &ScenarioConfig::reference(), FeatureScope::PerNode).unwrap();
        let m = feature_matrix(&p, &stats, 10).unwrap();
        let last = stats.width() - 1;
        for i in 0..2 {
            assert_eq!(m.get(i, last), stats.normalize_policy(0.0));
        }
    }

    #[test]
    fn training_segment_is_standardized() {
        let p = panel(300, 4);
        let window = 5;
        for scope in [FeatureScope::Pooled, FeatureScope::PerNode] {
            let stats = NormStats::fit(&p, window, 0..200, &ScenarioConfig::reference(), scope).unwrap();
            let rows: Vec<Tensor> = (window..200).map(|t| feature_matrix(&p, &stats, t).unwrap()).collect();
            let groups: Vec<Vec<usize>> = match scope {
                FeatureScope::Pooled => vec![(0..4).collect()],
                FeatureScope::PerNode => (0..4).map(|i| vec![i]).collect(),
            };
            for c in 0..stats.width() - 1 {
                for nodes in &groups {
                    let vals: Vec<f64> = rows.iter().flat_map(|m| nodes.iter().map(move |&i| m.get(i, c))).collect();
                    let (mean, std) = mean_std(vals.iter().copied());
                    if stats.feature_std[nodes[0]][c] == 0.0 {
                        assert!(vals.iter().all(|&v| v == 0.0));
                    } else {
                        assert!(mean.abs() < 1e-9, "{scope:?} column {c}: mean {mean}");
                        assert!((std - 1.0).abs() < 1e-9, "{scope:?} column {c}: std {std}");
                    }
                }
            }
        }
    }

    #[test]
    fn target_round_trip() {
        let p = panel(120, 3);
        let stats = NormStats::fit(&p, 4, 0..80, &ScenarioConfig::reference(), FeatureScope::PerNode).unwrap();
        for i in 0..3 {
            for t in 0..120 {
                for (target, y) in [(Target::Ci, p.series(i).ci[t]), (Target::Price, p.series(i).price[t])] {
                    let z = stats.normalize_target(target, i, y);
                    assert!((stats.denormalize_target(target, i, z) - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn feature_set_batch_matches_feature_matrix() {
        let p = panel(80, 3);
        let stats = NormStats::fit(&p, 3, 0..60, &ScenarioConfig::reference(), FeatureScope::PerNode).unwrap();
        let set = FeatureSet::build(&p, &stats).unwrap();
        let b = set.batch(&[10, 42]).unwrap();
        assert_eq!(b.shape(), (6, stats.width()));
        for (k, t) in [10usize, 42].into_iter().enumerate() {
            let m = feature_matrix(&p, &stats, t).unwrap();
            for i in 0..3 {
                assert_eq!(b.row(k * 3 + i), m.row(i));
            }
        }
        assert!(set.batch(&[2]).is_err());
    }
}
