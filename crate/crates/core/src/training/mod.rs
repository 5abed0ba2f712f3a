//! Composite dual-target loss, Adam, and the mini-batch training loop with
//! early stopping.

mod adam;
mod loss;
mod train;

pub use adam::{Adam, OptimizerConfig};
pub use loss::{dual_loss, dual_loss_on_tape, LossBreakdown, LossWeights, TapeLoss};
pub use train::{
    error_metrics, evaluate, predict, predict_normalized, train, train_prepared, EpochRecord, Metrics, PolicyMode, PreparedData,
    TrainConfig, TrainHooks, TrainOutcome, TrainReport,
};
