//! Spatially sparse piecewise-constant and piecewise-smooth targets on cubic
//! partitions of the unit cube, the explicit two-hidden-layer ReLU nets that
//! approximate them, and a midpoint-rule `L^p` error oracle.

mod construct;
mod integrate;
mod partition;
mod rate;
mod target;

pub use construct::{
    approximate_piecewise_constant, build_indicator_net, embed_in_depth, band_l1_bound,
    geometric_band_bound, TrapezoidGadget,
};
pub use integrate::{lp_error, lp_error_checked, lp_error_tensor, midpoint_nodes, LpEstimate};
pub use partition::CubicPartition;
pub use rate::{
    empirical_rate_study, layer_count, RateMethod, RateReport, RateRow, RateStudyConfig,
};
pub use target::{LipschitzCertificate, Monomial, PiecewiseConstantSpec, PiecewiseSmoothSpec, Polynomial};

use thiserror::Error;

use crate::nets::NetError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("ramp width {tau} outside (0, {limit})")]
    TauOutOfRange { tau: f64, limit: f64 },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("integration resolution {0} below the minimum of 16")]
    ResolutionTooLow(usize),
    #[error("rate study needs at least 3 distinct budgets, got {0}")]
    TooFewBudgets(usize),
    #[error(transparent)]
    Net(#[from] NetError),
}
