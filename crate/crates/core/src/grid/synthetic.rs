//! Seeded synthetic panels with a known structural price equation.
//!
//! Each node's price follows
//!
//! ```text
//! price[i,t] = base[i] + a * demand[i,t] + tau * ci[i,t]
//!            + w * sum_{j in N(i)} price[j,t-1]
//!            + own[c] * cost[i,t] + spill[c] * mean_{j in N(i)} cost[j,t]
//!            + eta * shock[i,t]^2 + eps[i,t]
//! ```
//!
//! where `c` is the node's carbon class, `cost` is the CBAM cost of the
//! node's own CI under its hourly policy label and `shock` is the
//! standardized demand disturbance. Carbon intensity drops by `kappa[c] * s`
//! under policy intensity `s`. The planted coefficients give an exact oracle
//! for counterfactual impacts (see [`planted_impacts`]).

use std::f64::consts::PI;
use std::ops::Range;

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::classify::CarbonClass;
use super::graph::GridGraph;
use super::panel::{HourlyPanel, NodeSeries};
use crate::error::{Error, Result};
use crate::scenario::{cbam_cost_at, ScenarioConfig, DEFAULT_ETS, DEFAULT_THRESHOLD};

const BURN_IN: usize = 48;
const POLICY_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeProfile {
    pub code: String,
    /// EUR/MWh
    pub base_price: f64,
    /// kg CO2/MWh
    pub base_ci: f64,
    /// MW
    pub demand_mw: f64,
}

/// Planted response of one carbon class to CBAM.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassResponse {
    /// Price change per EUR/MWh of the node's own CBAM cost.
    #[serde(default)]
    pub own_cost: f64,
    /// Price change per EUR/MWh of the neighbors' mean CBAM cost.
    #[serde(default)]
    pub neighbor_cost: f64,
    /// Fractional CI reduction at full intensity.
    #[serde(default)]
    pub ci_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDesign {
    /// Draw an independent intensity label in {0, .25, .5, .75, 1} per node-hour.
    #[serde(default)]
    pub labels: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_ets")]
    pub ets: f64,
    #[serde(default)]
    pub low: ClassResponse,
    #[serde(default)]
    pub medium: ClassResponse,
    #[serde(default)]
    pub high: ClassResponse,
    /// Price change per (EUR/MWh)^2 of the node's own CBAM cost, all classes.
    #[serde(default)]
    pub convexity: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_ets() -> f64 {
    DEFAULT_ETS
}

impl Default for PolicyDesign {
    fn default() -> Self {
        Self {
            labels: false,
            threshold: DEFAULT_THRESHOLD,
            ets: DEFAULT_ETS,
            low: ClassResponse::default(),
            medium: ClassResponse::default(),
            high: ClassResponse::default(),
            convexity: 0.0,
        }
    }
}

impl PolicyDesign {
    pub fn response(&self, class: CarbonClass) -> ClassResponse {
        match class {
            CarbonClass::Low => self.low,
            CarbonClass::Medium => self.medium,
            CarbonClass::High => self.high,
        }
    }
}

fn default_variability() -> f64 {
    0.1
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    pub nodes: Vec<NodeProfile>,
    /// `a`: EUR/MWh per MW of demand.
    pub demand_slope: f64,
    /// `tau`: EUR/MWh per kg CO2/MWh.
    pub ci_coupling: f64,
    /// `w`: weight on each neighbor's previous-hour price.
    pub spillover: f64,
    pub noise_std: f64,
    /// `eta`: weight of the squared demand shock.
    #[serde(default)]
    pub nonlinearity: f64,
    /// Standard deviation of the relative CI fluctuation around `base_ci`.
    #[serde(default = "default_variability")]
    pub ci_variability: f64,
    #[serde(default)]
    pub policy: PolicyDesign,
}

impl SyntheticSpec {
    pub fn validate(&self, graph: &GridGraph) -> Result<()> {
        let scalars = [
            ("demand_slope", self.demand_slope),
            ("ci_coupling", self.ci_coupling),
            ("spillover", self.spillover),
            ("noise_std", self.noise_std),
            ("nonlinearity", self.nonlinearity),
            ("ci_variability", self.ci_variability),
            ("policy.threshold", self.policy.threshold),
            ("policy.ets", self.policy.ets),
            ("policy.convexity", self.policy.convexity),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} is not finite")));
            }
        }
        for (name, r) in [("low", self.policy.low), ("medium", self.policy.medium), ("high", self.policy.high)] {
            if !(r.own_cost.is_finite() && r.neighbor_cost.is_finite() && r.ci_reduction.is_finite()) {
                return Err(Error::Config(format!("policy.{name} has a non-finite coefficient")));
            }
            if !(0.0..=1.0).contains(&r.ci_reduction) {
                return Err(Error::Config(format!("policy.{name}.ci_reduction must lie in [0, 1]")));
            }
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if !(0.0..0.5).contains(&self.ci_variability) {
            return Err(Error::Config("ci_variability must lie in [0, 0.5)".into()));
        }
        if self.policy.threshold < 0.0 || self.policy.ets < 0.0 {
            return Err(Error::Config("policy threshold and ETS price must be >= 0".into()));
        }
        if self.spillover.abs() * graph.max_degree() as f64 >= 1.0 {
            return Err(Error::Config(format!(
                "spillover {} with max degree {} makes the price recursion explosive",
                self.spillover,
                graph.max_degree()
            )));
        }
        if self.nodes.len() != graph.len() {
            return Err(Error::Config(format!(
                "spec declares {} nodes, graph has {}",
                self.nodes.len(),
                graph.len()
            )));
        }
        for p in &self.nodes {
            if graph.index_of(&p.code).is_none() {
                return Err(Error::Config(format!("spec node `{}` is not in the graph", p.code)));
            }
            for (name, v) in [("base_price", p.base_price), ("base_ci", p.base_ci), ("demand_mw", p.demand_mw)] {
                if !v.is_finite() {
                    return Err(Error::Config(format!("{}.{name} is not finite", p.code)));
                }
            }
            if p.base_ci < 0.0 || p.demand_mw <= 0.0 {
                return Err(Error::Config(format!(
                    "{}: base_ci must be >= 0 and demand_mw > 0",
                    p.code
                )));
            }
        }
        Ok(())
    }

    /// Profiles reordered to match `graph`'s node order.
    fn profiles_for(&self, graph: &GridGraph) -> Vec<&NodeProfile> {
        graph
            .nodes()
            .iter()
            .map(|c| self.nodes.iter().find(|p| &p.code == c).expect("validated"))
            .collect()
    }

    /// Eight-country European subgraph profile used by examples and tests.
    pub fn european(seed: u64) -> Self {
        let node = |code: &str, base_price: f64, base_ci: f64, demand_mw: f64| NodeProfile {
            code: code.into(),
            base_price,
            base_ci,
            demand_mw,
        };
        Self {
            seed,
            start: default_start(),
            nodes: vec![
                node("AT", 95.0, 100.0, 7000.0),
                node("CH", 90.0, 12.0, 7000.0),
                node("DE", 100.0, 125.0, 55000.0),
                node("FR", 85.0, 20.0, 50000.0),
                node("IT", 120.0, 115.0, 33000.0),
                node("NL", 100.0, 110.0, 13000.0),
                node("PL", 110.0, 700.0, 19000.0),
                node("CZ", 105.0, 450.0, 7500.0),
            ],
            demand_slope: 0.0005,
            ci_coupling: 0.05,
            spillover: 0.02,
            noise_std: 2.0,
            nonlinearity: 0.0,
            ci_variability: 0.1,
            policy: PolicyDesign::default(),
        }
    }
}

/// AT, CH, DE, FR, IT, NL, PL, CZ with their land interconnectors.
pub fn european_subgraph() -> GridGraph {
    let nodes = ["AT", "CH", "DE", "FR", "IT", "NL", "PL", "CZ"].map(String::from).to_vec();
    let edges = [
        ("AT", "CH"),
        ("AT", "DE"),
        ("AT", "IT"),
        ("AT", "CZ"),
        ("CH", "DE"),
        ("CH", "FR"),
        ("CH", "IT"),
        ("DE", "FR"),
        ("DE", "NL"),
        ("DE", "PL"),
        ("DE", "CZ"),
        ("FR", "IT"),
        ("PL", "CZ"),
    ];
    GridGraph::new(nodes, &edges).expect("static graph is valid")
}

fn class_of(p: &NodeProfile) -> CarbonClass {
    CarbonClass::from_mean_ci(p.base_ci)
}

struct NodeState {
    demand_shock: f64,
    fossil: f64,
    wind: f64,
    imports: f64,
}

/// Emits a panel of `hours` rows; fully determined by `(spec, graph, hours)`.
pub fn generate_synthetic(spec: &SyntheticSpec, graph: &GridGraph, hours: usize) -> Result<HourlyPanel> {
    if hours == 0 {
        return Err(Error::Config("hours must be >= 1".into()));
    }
    spec.validate(graph)?;
    let profiles = spec.profiles_for(graph);
    let n = graph.len();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| graph.neighbors(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mut state: Vec<NodeState> = (0..n)
        .map(|_| NodeState {
            demand_shock: 0.0,
            fossil: 0.0,
            wind: 0.0,
            imports: 0.0,
        })
        .collect();
    let mut series: Vec<NodeSeries> = (0..n).map(|_| NodeSeries::with_len(hours)).collect();
    if spec.policy.labels {
        for s in &mut series {
            s.policy_intensity = Some(vec![0.0; hours]);
        }
    }
    let mut prev_price: Vec<f64> = profiles
        .iter()
        .map(|p| p.base_price + spec.demand_slope * p.demand_mw + spec.ci_coupling * p.base_ci)
        .collect();
    let innov = |rho: f64| (1.0 - rho * rho).sqrt();

    let mut ci = vec![0.0; n];
    let mut cost = vec![0.0; n];
    let mut shock_sq = vec![0.0; n];
    let mut demand = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let total = hours + BURN_IN;
    for step in 0..total {
        let ts = spec.start + Duration::hours(step as i64 - BURN_IN as i64);
        let hod = f64::from(ts.hour());
        let weekend = if ts.weekday().num_days_from_monday() >= 5 { 1.0 } else { 0.0 };
        let daily = (2.0 * PI * (hod - 9.0) / 24.0).sin();
        let sun = (PI * (hod - 6.0) / 12.0).sin().max(0.0);
        let row = step.checked_sub(BURN_IN);

        for i in 0..n {
            let p = profiles[i];
            let st = &mut state[i];
            st.demand_shock = 0.9 * st.demand_shock + innov(0.9) * normal(&mut rng);
            st.fossil = (0.95 * st.fossil + innov(0.95) * normal(&mut rng)).clamp(-4.0, 4.0);
            st.wind = 0.9 * st.wind + innov(0.9) * normal(&mut rng);
            st.imports = 0.9 * st.imports + innov(0.9) * normal(&mut rng);
            let label_draw = rng.random_range(0..POLICY_LEVELS.len());
            noise[i] = normal(&mut rng);
            let s = if spec.policy.labels { POLICY_LEVELS[label_draw] } else { 0.0 };

            let phi = (spec.ci_variability * st.fossil).clamp(-0.5, 0.5);
            let d = p.demand_mw * (1.0 + 0.10 * daily - 0.07 * weekend + 0.05 * st.demand_shock);
            let net_imports = 0.05 * p.demand_mw * st.imports;
            let generation = (d - net_imports).max(0.0);
            let fossil_share = ((p.base_ci / 1000.0) * (1.0 + phi)).clamp(0.0, 0.98);
            let fossil = generation * fossil_share;
            let coal_frac = ((p.base_ci - 150.0) / 550.0).clamp(0.0, 1.0);
            let weights = [
                0.35,
                0.25,
                0.20 * (1.0 + 0.5 * st.wind.tanh()),
                0.30 * sun,
                0.05,
            ];
            let wsum: f64 = weights.iter().sum();
            let clean = generation - fossil;

            let ci_pre = p.base_ci * (1.0 + phi);
            let response = spec.policy.response(class_of(p));
            ci[i] = ci_pre * (1.0 - response.ci_reduction * s);
            cost[i] = cbam_cost_at(ci[i], s, spec.policy.threshold, spec.policy.ets);
            shock_sq[i] = st.demand_shock * st.demand_shock;
            demand[i] = d;

            if let Some(t) = row {
                let out = &mut series[i];
                out.demand[t] = d;
                out.generation[0][t] = fossil * coal_frac;
                out.generation[1][t] = fossil * (1.0 - coal_frac);
                for (k, w) in weights.iter().enumerate() {
                    out.generation[2 + k][t] = clean * w / wsum;
                }
                out.net_imports[t] = net_imports;
                out.ci[t] = ci[i];
                if let Some(labels) = out.policy_intensity.as_mut() {
                    labels[t] = s;
                }
            }
        }

        let mut price = vec![0.0; n];
        for i in 0..n {
            let p = profiles[i];
            let response = spec.policy.response(class_of(p));
            let nb = &neighbors[i];
            let lag_sum: f64 = nb.iter().map(|&j| prev_price[j]).sum();
            let nb_cost = if nb.is_empty() {
                0.0
            } else {
                nb.iter().map(|&j| cost[j]).sum::<f64>() / nb.len() as f64
            };
            price[i] = p.base_price
                + spec.demand_slope * demand[i]
                + spec.ci_coupling * ci[i]
                + spec.spillover * lag_sum
                + response.own_cost * cost[i]
                + response.neighbor_cost * nb_cost
                + spec.policy.convexity * cost[i] * cost[i]
                + spec.nonlinearity * shock_sq[i]
                + spec.noise_std * noise[i];
            if let Some(t) = row {
                series[i].price[t] = price[i];
            }
        }
        prev_price = price;
    }

    let timestamps = (0..hours).map(|t| spec.start + Duration::hours(t as i64)).collect();
    HourlyPanel::new(timestamps, graph.nodes().to_vec(), series)
}

/// Mean planted (price, CI) change per node for `scenario` against intensity
/// 0, holding the observed exogenous state and lagged prices fixed.
///
/// The pre-policy CI is recovered from each observation as
/// `ci / (1 - kappa * label)`.
pub fn planted_impacts(
    spec: &SyntheticSpec,
    graph: &GridGraph,
    panel: &HourlyPanel,
    scenario: &ScenarioConfig,
    range: Range<usize>,
) -> Result<Vec<(f64, f64)>> {
    spec.validate(graph)?;
    if range.is_empty() || range.end > panel.len() {
        return Err(Error::Range(format!("segment {range:?} not within panel of {} hours", panel.len())));
    }
    let profiles = spec.profiles_for(graph);
    let n = graph.len();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| graph.neighbors(i)).collect();
    let mut sums = vec![(0.0, 0.0); n];
    let s = scenario.intensity;
    let mut ci_pre = vec![0.0; n];
    let mut d_ci = vec![0.0; n];
    let mut cost = vec![0.0; n];
    for t in range.clone() {
        for i in 0..n {
            let r = spec.policy.response(class_of(profiles[i]));
            let series = panel.series(i);
            let label = series.policy_intensity.as_ref().map_or(0.0, |l| l[t]);
            ci_pre[i] = series.ci[t] / (1.0 - r.ci_reduction * label);
            let ci_new = ci_pre[i] * (1.0 - r.ci_reduction * s);
            d_ci[i] = ci_new - ci_pre[i];
            cost[i] = cbam_cost_at(ci_new, s, scenario.threshold, scenario.ets);
        }
        for i in 0..n {
            let r = spec.policy.response(class_of(profiles[i]));
            let nb = &neighbors[i];
            let nb_cost = if nb.is_empty() {
                0.0
            } else {
                nb.iter().map(|&j| cost[j]).sum::<f64>() / nb.len() as f64
            };
            let d_price = spec.ci_coupling * d_ci[i]
                + r.own_cost * cost[i]
                + r.neighbor_cost * nb_cost
                + spec.policy.convexity * cost[i] * cost[i];
            sums[i].0 += d_price;
            sums[i].1 += d_ci[i];
        }
    }
    let len = range.len() as f64;
    Ok(sums.into_iter().map(|(p, c)| (p / len, c / len)).collect())
}
