use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, OptimizerConfig};
use super::loss::{dual_loss, dual_loss_on_tape, LossBreakdown, LossWeights};
use crate::autodiff::{pearson_value, Tape, Tensor};
use crate::error::{Error, Result};
use crate::grid::{FeatureScope, FeatureSet, GridGraph, HourlyPanel, NormStats, SplitRanges, SplitSpec, Target};
use crate::model::{forward, forward_on_tape, init_params, Checkpoint, ModelConfig, ModelParams, ParamVars};
use crate::scenario::{observed_costs, ScenarioConfig};

/// What the policy slot holds during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    /// Costs implied by the panel's policy labels (zero cost when unlabelled).
    #[default]
    Observed,
    /// Slot held at 0 throughout, for ablations.
    Ablated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub policy: PolicyMode,
    #[serde(default)]
    pub feature_scope: FeatureScope,
    /// Threshold and ETS price for observed costs; its intensity-1 costs set
    /// the policy-slot normalization.
    #[serde(default = "ScenarioConfig::reference")]
    pub policy_reference: ScenarioConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            optimizer: OptimizerConfig::default(),
            split: SplitSpec::default(),
            policy: PolicyMode::Observed,
            feature_scope: FeatureScope::default(),
            policy_reference: ScenarioConfig::reference(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.split.validate()?;
        self.policy_reference.validate()
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            ci: self.model.lambda_ci,
            price: self.model.lambda_price,
            corr: self.model.lambda_corr,
        }
    }
}

/// Normalized features, adjacency and split of one panel.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub norm: NormStats,
    pub features: FeatureSet,
    pub adjacency: Tensor,
    pub ranges: SplitRanges,
}

impl PreparedData {
    /// Fits normalization on the training segment and fills the policy slot
    /// according to `config.policy`.
    pub fn new(config: &TrainConfig, graph: &GridGraph, panel: &HourlyPanel) -> Result<Self> {
        config.validate()?;
        let ranges = config.split.ranges(panel.len())?;
        if ranges.train.len() <= config.model.window {
            return Err(Error::Range(format!(
                "training segment of {} hours does not exceed the lag window {}",
                ranges.train.len(),
                config.model.window
            )));
        }
        let norm = NormStats::fit(
            panel,
            config.model.window,
            ranges.train.clone(),
            &config.policy_reference,
            config.feature_scope,
        )?;
        Self::with_norm(config, norm, graph, panel)
    }

    /// Uses existing normalization statistics (e.g. from a checkpoint).
    pub fn with_norm(config: &TrainConfig, norm: NormStats, graph: &GridGraph, panel: &HourlyPanel) -> Result<Self> {
        if graph.nodes() != panel.nodes() {
            return Err(Error::Schema(format!(
                "graph nodes {:?} do not match panel nodes {:?}",
                graph.nodes(),
                panel.nodes()
            )));
        }
        let ranges = config.split.ranges(panel.len())?;
        let mut features = FeatureSet::build(panel, &norm)?;
        match config.policy {
            PolicyMode::Observed => {
                features.set_policy_costs(&observed_costs(panel, &config.policy_reference), &norm)?
            }
            PolicyMode::Ablated => features.fill_policy(0.0),
        }
        Ok(Self {
            norm,
            features,
            adjacency: graph.adjacency(),
            ranges,
        })
    }

    pub fn train_hours(&self) -> Vec<usize> {
        self.features.usable_hours(self.ranges.train.clone())
    }

    pub fn val_hours(&self) -> Vec<usize> {
        self.features.usable_hours(self.ranges.val.clone())
    }

    pub fn test_hours(&self) -> Vec<usize> {
        self.features.usable_hours(self.ranges.test.clone())
    }
}

/// Accuracy of one segment in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub hours: usize,
    /// kg CO2/MWh
    pub rmse_ci: f64,
    /// EUR/MWh
    pub rmse_price: f64,
    pub mae_ci: f64,
    pub mae_price: f64,
    /// Correlation of predicted CI and price over all node-hours.
    pub pred_corr: f64,
    pub target_corr: f64,
    /// The same two correlations on per-node z-scored values.
    pub pred_corr_normalized: f64,
    pub target_corr_normalized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the restored parameters.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub parameter_count: usize,
    pub test: Metrics,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: ModelParams,
    pub norm: NormStats,
}

impl TrainOutcome {
    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            config: config.model.clone(),
            input_dim: self.params.input_dim(),
            params: self.params.clone(),
            norm: self.norm.clone(),
            split: config.split,
        }
    }
}

/// Instrumentation for tests and diagnostics.
#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Gradients of blocks whose name starts with any of these are set to 0
    /// before each update.
    pub zero_gradients: Vec<String>,
    /// Called after every update with `(epoch, batch, params)`.
    pub on_step: Option<&'a mut dyn FnMut(usize, usize, &ModelParams)>,
}

pub fn train(config: &TrainConfig, graph: &GridGraph, panel: &HourlyPanel) -> Result<TrainOutcome> {
    let data = PreparedData::new(config, graph, panel)?;
    train_prepared(config, &data, panel, &mut TrainHooks::default())
}

/// Mini-batch training with early stopping on the validation loss. Patience
/// 0 disables early stopping. `panel` supplies natural-unit targets for the
/// test metrics.
pub fn train_prepared(
    config: &TrainConfig,
    data: &PreparedData,
    panel: &HourlyPanel,
    hooks: &mut TrainHooks<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mc = &config.model;
    if data.norm.window != mc.window {
        return Err(Error::Config(format!(
            "features built with window {}, config has {}",
            data.norm.window, mc.window
        )));
    }
    let mut train_hours = data.train_hours();
    if train_hours.is_empty() {
        return Err(Error::Range("no usable training hours past the lag window".into()));
    }
    let val_hours = data.val_hours();
    let weights = config.weights();
    let mut params = init_params(mc, data.features.width())?;
    let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
    let zeroed: Vec<bool> = names
        .iter()
        .map(|n| hooks.zero_gradients.iter().any(|p| n.starts_with(p.as_str())))
        .collect();
    let shapes: Vec<(usize, usize)> = params.blocks().iter().map(|(_, t)| t.shape()).collect();
    let mut adam = Adam::new(config.optimizer, mc.learning_rate, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    rng.set_stream(1);

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..mc.epochs {
        train_hours.shuffle(&mut rng);
        let mut acc = LossBreakdown::default();
        let mut entries = 0usize;
        for (batch, hours) in train_hours.chunks(mc.batch_hours).enumerate() {
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, &params, true);
            let x = tape.constant(data.features.batch(hours)?);
            let (y_ci, y_price) = data.features.targets(hours)?;
            let f = forward_on_tape(&mut tape, &vars, params.shared.len(), x, &data.adjacency)?;
            let loss = dual_loss_on_tape(&mut tape, f.pred_ci, f.pred_price, &y_ci, &y_price, weights)?;
            let parts = loss.breakdown(&tape);
            if !parts.total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch,
                    message: format!("loss is {}", parts.total),
                });
            }
            let grads = tape.backward(loss.total)?;
            let grads: Vec<Tensor> = vars
                .vars
                .iter()
                .zip(&zeroed)
                .map(|(&v, &z)| {
                    let g = grads.get(v);
                    if z {
                        Tensor::zeros(g.rows(), g.cols())
                    } else {
                        g
                    }
                })
                .collect();
            if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    batch,
                    message: format!("non-finite gradient for {}", names[k]),
                });
            }
            adam.step(params.blocks_mut(), &grads)?;
            if !params.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch,
                    message: "parameters became non-finite after the update".into(),
                });
            }
            if let Some(cb) = hooks.on_step.as_mut() {
                cb(epoch, batch, &params);
            }
            let w = y_ci.len();
            acc.mse_ci += parts.mse_ci * w as f64;
            acc.mse_price += parts.mse_price * w as f64;
            acc.corr_term += parts.corr_term * w as f64;
            acc.total += parts.total * w as f64;
            entries += w;
        }
        let e = entries as f64;
        let train_loss = LossBreakdown {
            mse_ci: acc.mse_ci / e,
            mse_price: acc.mse_price / e,
            corr_term: acc.corr_term / e,
            total: acc.total / e,
        };
        let val_loss = if val_hours.is_empty() {
            train_loss
        } else {
            segment_loss(&params, data, &val_hours, weights)?
        };
        if !val_loss.total.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: 0,
                message: format!("validation loss is {}", val_loss.total),
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train: train_loss,
            val: val_loss,
        });
        if best.as_ref().is_none_or(|(_, b, _)| val_loss.total < *b) {
            best = Some((epoch, val_loss.total, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if mc.patience > 0 && since_best >= mc.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, params) = match best {
        Some((e, _, p)) => (e, p),
        None => return Err(Error::Config("epochs must be >= 1".into())),
    };
    let test_hours = data.test_hours();
    let test = if test_hours.is_empty() {
        Metrics::default()
    } else {
        evaluate(&params, data, panel, &test_hours)?
    };
    Ok(TrainOutcome {
        report: TrainReport {
            epochs,
            best_epoch,
            stopped_early,
            parameter_count: params.parameter_count(),
            test,
        },
        params,
        norm: data.norm.clone(),
    })
}

const EVAL_CHUNK: usize = 256;

/// Normalized-space predictions for `hours`, hour-major.
pub fn predict_normalized(
    params: &ModelParams,
    features: &FeatureSet,
    adjacency: &Tensor,
    hours: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ci = Vec::with_capacity(hours.len() * features.node_count());
    let mut price = Vec::with_capacity(ci.capacity());
    for chunk in hours.chunks(EVAL_CHUNK) {
        let f = forward(params, &features.batch(chunk)?, adjacency)?;
        ci.extend(f.pred_ci);
        price.extend(f.pred_price);
    }
    Ok((ci, price))
}

/// Natural-unit predictions for `hours`, hour-major.
pub fn predict(
    params: &ModelParams,
    norm: &NormStats,
    features: &FeatureSet,
    adjacency: &Tensor,
    hours: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = features.node_count();
    let (mut ci, mut price) = predict_normalized(params, features, adjacency, hours)?;
    for (k, (c, p)) in ci.iter_mut().zip(price.iter_mut()).enumerate() {
        *c = norm.denormalize_target(Target::Ci, k % n, *c);
        *p = norm.denormalize_target(Target::Price, k % n, *p);
    }
    Ok((ci, price))
}

fn segment_loss(params: &ModelParams, data: &PreparedData, hours: &[usize], w: LossWeights) -> Result<LossBreakdown> {
    let (ci, price) = predict_normalized(params, &data.features, &data.adjacency, hours)?;
    let (y_ci, y_price) = data.features.targets(hours)?;
    dual_loss(&ci, &price, y_ci.data(), y_price.data(), w)
}

/// RMSE, MAE and realized correlations on `hours`, in natural units.
pub fn evaluate(params: &ModelParams, data: &PreparedData, panel: &HourlyPanel, hours: &[usize]) -> Result<Metrics> {
    if hours.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty segment".into()));
    }
    if !params.is_finite() {
        return Err(Error::Contract("parameters are not finite".into()));
    }
    let n = panel.node_count();
    let (ci, price) = predict(params, &data.norm, &data.features, &data.adjacency, hours)?;
    let mut y_ci = Vec::with_capacity(ci.len());
    let mut y_price = Vec::with_capacity(ci.len());
    for &t in hours {
        for i in 0..n {
            y_ci.push(panel.series(i).ci[t]);
            y_price.push(panel.series(i).price[t]);
        }
    }
    let z = |v: &[f64], target: Target| -> Vec<f64> {
        v.iter().enumerate().map(|(k, &x)| data.norm.normalize_target(target, k % n, x)).collect()
    };
    let (rmse_ci, mae_ci) = error_metrics(&ci, &y_ci)?;
    let (rmse_price, mae_price) = error_metrics(&price, &y_price)?;
    Ok(Metrics {
        hours: hours.len(),
        rmse_ci,
        rmse_price,
        mae_ci,
        mae_price,
        pred_corr: pearson_value(&ci, &price),
        target_corr: pearson_value(&y_ci, &y_price),
        pred_corr_normalized: pearson_value(&z(&ci, Target::Ci), &z(&price, Target::Price)),
        target_corr_normalized: pearson_value(&z(&y_ci, Target::Ci), &z(&y_price, Target::Price)),
    })
}

/// `(rmse, mae)` of `pred` against `truth`.
pub fn error_metrics(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "error metrics need equal non-empty vectors, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let sq = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let abs = pred.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(((sq / n).sqrt(), abs / n))
}
