//! Minimal ReLU feed-forward networks with an exact parameter count,
//! clamped scalar output and hand-written backpropagation.

mod arch;
mod net;
mod train;

pub use arch::{width_for_budget, LayerMask, NetArchitecture};
pub use net::{ForwardBuf, Gradient, ReluNet, SparseNet};
pub use train::{train, Optimizer, OptimizerKind, StepSchedule, TrainOutcome, TrainerConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("input has dimension {found}, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty training data")]
    EmptyData,
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("malformed network document: {0}")]
    Malformed(String),
}
