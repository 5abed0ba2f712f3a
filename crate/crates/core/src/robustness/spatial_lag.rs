//! Spatial-lag panel regression `y_t = rho W y_t + X_t beta + e_t`, fitted by
//! concentrated least squares over a grid of `rho`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::linalg::{dependent_columns, solve};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::grid::{CarbonClass, CarbonClasses, GridGraph, HourlyPanel};

/// Grid of spatial coefficients searched: -0.95 to 0.95 in steps of 0.01.
pub fn rho_grid() -> Vec<f64> {
    (-95..=95).map(|k| f64::from(k) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialLagModel {
    pub rho: f64,
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub residual_variance: f64,
    /// Row-normalized adjacency without self-loops.
    pub weights: Tensor,
}

/// Regression data: for each hour, an `n x k` design and the `n` outcomes.
#[derive(Debug, Clone)]
pub struct SpatialDesign {
    pub columns: Vec<String>,
    pub x: Vec<Tensor>,
    pub y: Vec<Vec<f64>>,
}

impl SpatialLagModel {
    /// Reduced-form prediction `(I - rho W)^-1 X beta` for one hour.
    pub fn predict_hour(&self, x: &Tensor) -> Result<Vec<f64>> {
        if x.cols() != self.beta.len() || x.rows() != self.weights.rows() {
            return Err(Error::Shape {
                op: "spatial_lag_predict",
                left: x.shape(),
                right: (self.weights.rows(), self.beta.len()),
            });
        }
        let xb = x.matmul(&Tensor::column(self.beta.clone()))?;
        Ok(solve(&self.spatial_filter(), &xb)?.into_data())
    }

    /// `I - rho W`.
    pub fn spatial_filter(&self) -> Tensor {
        let n = self.weights.rows();
        Tensor::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - self.rho * self.weights.get(i, j))
    }

    pub fn coefficient(&self, column: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == column).map(|k| self.beta[k])
    }
}

/// Concentrated least squares on an arbitrary design.
///
/// For each `rho` on [`rho_grid`], `beta(rho)` is the least-squares solution
/// on `y - rho W y`; the `rho` with the smallest residual sum of squares wins.
pub fn fit_spatial_lag_design(design: &SpatialDesign, weights: &Tensor) -> Result<SpatialLagModel> {
    let k = design.columns.len();
    let n = weights.rows();
    if design.x.len() != design.y.len() || design.x.is_empty() {
        return Err(Error::Contract("design needs matching non-empty x and y".into()));
    }
    for (x, y) in design.x.iter().zip(&design.y) {
        if x.shape() != (n, k) || y.len() != n {
            return Err(Error::Shape {
                op: "fit_spatial_lag",
                left: x.shape(),
                right: (n, k),
            });
        }
    }
    let obs = design.x.len() * n;
    if obs < 10 * (k + 1) {
        return Err(Error::Estimation(format!(
            "{obs} observations for {} parameters; need at least ten per parameter",
            k + 1
        )));
    }
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|c| design.x.iter().flat_map(|x| (0..n).map(move |i| x.get(i, c))).collect())
        .collect();
    let dependent = dependent_columns(&cols, 1e-9);
    if !dependent.is_empty() {
        let names: Vec<&str> = dependent.iter().map(|&c| design.columns[c].as_str()).collect();
        return Err(Error::Estimation(format!(
            "rank-deficient regressors: {} collinear with earlier columns",
            names.join(", ")
        )));
    }
    // column scaling keeps X'X well conditioned
    let scale: Vec<f64> = cols
        .iter()
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
        .collect();
    let y: Vec<f64> = design.y.iter().flatten().copied().collect();
    let wy: Vec<f64> = design
        .y
        .iter()
        .flat_map(|yt| (0..n).map(move |i| (0..n).map(|j| weights.get(i, j) * yt[j]).sum::<f64>()))
        .collect();
    let xtx = Tensor::from_fn(k, k, |a, b| {
        cols[a].iter().zip(&cols[b]).map(|(p, q)| p * q).sum::<f64>() / (scale[a] * scale[b])
    });
    let xt = |v: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|a| cols[a].iter().zip(v).map(|(p, q)| p * q).sum::<f64>() / scale[a])
            .collect()
    };
    let mut rhs = Tensor::zeros(k, 2);
    for (a, (p, q)) in xt(&y).into_iter().zip(xt(&wy)).enumerate() {
        rhs.set(a, 0, p);
        rhs.set(a, 1, q);
    }
    let sol = solve(&xtx, &rhs)?;
    let resid = |v: &[f64], c: usize| -> Vec<f64> {
        (0..obs)
            .map(|r| v[r] - (0..k).map(|a| cols[a][r] / scale[a] * sol.get(a, c)).sum::<f64>())
            .collect()
    };
    let e_y = resid(&y, 0);
    let e_wy = resid(&wy, 1);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let (yy, yw, ww) = (dot(&e_y, &e_y), dot(&e_y, &e_wy), dot(&e_wy, &e_wy));
    let mut best = (yy, 0.0);
    // without any neighbor signal rho is unidentified and stays 0
    let grid = if ww > 1e-12 * yy.max(1.0) { rho_grid() } else { Vec::new() };
    for rho in grid {
        // residual of y - rho Wy after projecting out X
        let rss = (yy - 2.0 * rho * yw + rho * rho * ww).max(0.0);
        if rss < best.0 {
            best = (rss, rho);
        }
    }
    let (rss, rho) = best;
    let beta = (0..k).map(|a| (sol.get(a, 0) - rho * sol.get(a, 1)) / scale[a]).collect();
    Ok(SpatialLagModel {
        rho,
        columns: design.columns.clone(),
        beta,
        residual_variance: rss / (obs - k) as f64,
        weights: weights.clone(),
    })
}

/// Regressors of the price baseline: node fixed effects, demand, own price and
/// CI lagged one hour, own policy cost and the neighbor-mean policy cost,
/// both interacted with carbon class. Interaction columns for classes
/// without nodes are omitted, as is the own-cost column of a class whose
/// cost is zero throughout the fitted segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub nodes: Vec<String>,
    pub classes: Vec<CarbonClass>,
    pub columns: Vec<String>,
}

const CLASSES: [CarbonClass; 3] = [CarbonClass::Low, CarbonClass::Medium, CarbonClass::High];

impl BaselineSpec {
    /// Picks the columns for `panel` with costs `costs` (`[hour * n + node]`)
    /// over `segment`.
    pub fn new(panel: &HourlyPanel, classes: &CarbonClasses, costs: &[f64], segment: Range<usize>) -> Result<Self> {
        let n = panel.node_count();
        let node_classes = panel
            .nodes()
            .iter()
            .map(|c| {
                classes
                    .get(c)
                    .copied()
                    .ok_or_else(|| Error::Schema(format!("no carbon class for node `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut columns: Vec<String> = panel.nodes().iter().map(|c| format!("fe_{c}")).collect();
        columns.extend(["demand", "price_lag1", "ci_lag1"].map(String::from));
        for class in CLASSES {
            let members: Vec<usize> = (0..n).filter(|&i| node_classes[i] == class).collect();
            if members.is_empty() {
                continue;
            }
            let exposed = segment.clone().any(|t| members.iter().any(|&i| costs[t * n + i] != 0.0));
            if exposed {
                columns.push(format!("cost_{class}"));
            }
        }
        for class in CLASSES {
            if node_classes.contains(&class) {
                columns.push(format!("neighbor_cost_{class}"));
            }
        }
        Ok(Self {
            nodes: panel.nodes().to_vec(),
            classes: node_classes,
            columns,
        })
    }

    /// Design row block for hour `t >= 1`.
    pub fn design_hour(&self, panel: &HourlyPanel, weights: &Tensor, costs: &[f64], t: usize) -> Result<Tensor> {
        let n = self.nodes.len();
        if t == 0 || t >= panel.len() {
            return Err(Error::Range(format!("baseline needs 1 <= hour < {}, got {t}", panel.len())));
        }
        if costs.len() != panel.len() * n {
            return Err(Error::Contract(format!(
                "cost series has {} values, expected {}",
                costs.len(),
                panel.len() * n
            )));
        }
        let own = &costs[t * n..(t + 1) * n];
        let mut x = Tensor::zeros(n, self.columns.len());
        for i in 0..n {
            let s = panel.series(i);
            let neighbor: f64 = (0..n).map(|j| weights.get(i, j) * own[j]).sum();
            for (c, name) in self.columns.iter().enumerate() {
                let v = match name.as_str() {
                    "demand" => s.demand[t],
                    "price_lag1" => s.price[t - 1],
                    "ci_lag1" => s.ci[t - 1],
                    _ => {
                        if let Some(code) = name.strip_prefix("fe_") {
                            f64::from(u8::from(code == self.nodes[i]))
                        } else if let Some(class) = name.strip_prefix("neighbor_cost_") {
                            if class == self.classes[i].as_str() { neighbor } else { 0.0 }
                        } else if let Some(class) = name.strip_prefix("cost_") {
                            if class == self.classes[i].as_str() { own[i] } else { 0.0 }
                        } else {
                            return Err(Error::Config(format!("unknown baseline column `{name}`")));
                        }
                    }
                };
                x.set(i, c, v);
            }
        }
        Ok(x)
    }

    pub fn design(
        &self,
        panel: &HourlyPanel,
        weights: &Tensor,
        costs: &[f64],
        hours: &[usize],
    ) -> Result<SpatialDesign> {
        let n = self.nodes.len();
        let x = hours
            .iter()
            .map(|&t| self.design_hour(panel, weights, costs, t))
            .collect::<Result<Vec<_>>>()?;
        let y = hours
            .iter()
            .map(|&t| (0..n).map(|i| panel.series(i).price[t]).collect())
            .collect();
        Ok(SpatialDesign {
            columns: self.columns.clone(),
            x,
            y,
        })
    }
}

/// Baseline fitted to a panel together with its regressor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBaseline {
    pub spec: BaselineSpec,
    pub model: SpatialLagModel,
}

/// Fits the price baseline on hours `segment` (hour 0 is skipped since it
/// has no lag) with observed policy costs `costs`.
pub fn fit_spatial_lag(
    panel: &HourlyPanel,
    graph: &GridGraph,
    classes: &CarbonClasses,
    costs: &[f64],
    segment: Range<usize>,
) -> Result<FittedBaseline> {
    if graph.nodes() != panel.nodes() {
        return Err(Error::Schema("graph and panel node lists differ".into()));
    }
    let weights = graph.row_normalized_weights();
    let spec = BaselineSpec::new(panel, classes, costs, segment.clone())?;
    let hours: Vec<usize> = segment.filter(|&t| t >= 1).collect();
    let design = spec.design(panel, &weights, costs, &hours)?;
    let model = fit_spatial_lag_design(&design, &weights)?;
    Ok(FittedBaseline { spec, model })
}

impl FittedBaseline {
    /// Reduced-form predictions for `hours`, hour-major.
    pub fn predict(&self, panel: &HourlyPanel, costs: &[f64], hours: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(hours.len() * self.spec.nodes.len());
        for &t in hours {
            let x = self.spec.design_hour(panel, &self.model.weights, costs, t)?;
            out.extend(self.model.predict_hour(&x)?);
        }
        Ok(out)
    }

    /// Test RMSE of price in EUR/MWh.
    pub fn rmse(&self, panel: &HourlyPanel, costs: &[f64], hours: &[usize]) -> Result<f64> {
        let pred = self.predict(panel, costs, hours)?;
        let truth: Vec<f64> = hours
            .iter()
            .flat_map(|&t| (0..self.spec.nodes.len()).map(move |i| panel.series(i).price[t]))
            .collect();
        Ok(crate::training::error_metrics(&pred, &truth)?.0)
    }

    /// Per-node mean price change between two cost series over `hours`.
    pub fn impacts(&self, panel: &HourlyPanel, treated: &[f64], baseline: &[f64], hours: &[usize]) -> Result<Vec<f64>> {
        if hours.is_empty() {
            return Err(Error::Contract("impact segment is empty".into()));
        }
        let n = self.spec.nodes.len();
        let a = self.predict(panel, treated, hours)?;
        let b = self.predict(panel, baseline, hours)?;
        let mut out = vec![0.0; n];
        for k in 0..a.len() {
            out[k % n] += a[k] - b[k];
        }
        Ok(out.into_iter().map(|v| v / hours.len() as f64).collect())
    }
}
