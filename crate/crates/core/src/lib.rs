//! Dual-target graph attention model for hourly electricity price and carbon
//! intensity on an interconnected grid, with a CBAM cost scenario engine and a
//! robustness harness (sensitivity sweeps, placebos, spatial-lag baseline).

pub mod autodiff;
pub mod error;
pub mod grid;
pub mod model;
pub mod robustness;
pub mod scenario;
pub mod training;

pub use error::{Error, Result};
