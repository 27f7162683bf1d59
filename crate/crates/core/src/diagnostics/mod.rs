//! Evaluation mathematics: global error metrics, the energy norm and the
//! residual functional on error fields, patch indicators with their
//! alignment checks, smoothed density maps and second-order operator bounds.

mod bound;
mod energy;
mod grid;
mod metrics;
mod patches;
mod smoothing;
pub mod stats;

pub use bound::{second_order_bound, spectral_norm, OperatorBoundReport, MIN_SAMPLES};
pub use energy::{energy_functional, energy_norm};
pub use grid::{EvalGrid, GridField};
pub use metrics::{relerr_port, rmse, ErrorStats, MetricsReport};
pub use patches::{
    local_energy, local_indicators, two_sided_check, IndicatorField, Patch, PatchPartition, RatioSummary,
    ResidualFields, TwoSidedReport, SPEARMAN_THRESHOLD,
};
pub use smoothing::{smoothed_density_maps, DensityMaps};
