//! Metrics, per-interval reports, plots and classical baselines.

mod baseline;
mod metrics;
mod plot;

pub use baseline::*;
pub use metrics::*;
pub use plot::*;
