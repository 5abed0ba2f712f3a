//! Sensitivity sweeps, placebo tests, agreement metrics and the spatial-lag
//! baseline.

mod harness;
mod linalg;
pub mod metrics;
pub mod placebo;
pub mod spatial_lag;

pub use harness::{
    baseline_comparison, compare_models, placebo_node, placebo_time, robustness_report, run_placebo,
    sensitivity_sweep, Analysis, BaselineResult, ModelComparison, PlaceboResult, ReportRow, RobustnessConfig,
    RobustnessReport, ScatterPoint, SweepAxis, SweepResult, SweepSetting, ETS_SWEEP, THRESHOLD_SWEEP,
};
pub use metrics::{attenuation, compare, sign_agree, spearman, RobustnessMetrics, SIGN_TOLERANCE};
pub use placebo::{derangement, PlaceboKind, PlaceboMode, Scramble};
pub use spatial_lag::{
    fit_spatial_lag, fit_spatial_lag_design, rho_grid, BaselineSpec, FittedBaseline, SpatialDesign, SpatialLagModel,
};
