//! Batch fitted-Q iteration, online DQN with replay, exact dynamic
//! programming on tabular models, policy evaluation and the regret identity.

mod dp;
mod dqn;
mod eval;
mod fqi;
mod hypothesis;
mod policy;
mod replay;

pub use dp::{dp_solve, DpSolution};
pub use dqn::{dqn_train, write_curve_csv, CurvePoint, DqnConfig, DqnOutcome};
pub use eval::{evaluate_policy, regret_identity_check, Evaluation, RegretCheck, Summary};
pub use fqi::{bellman_targets, fitted_q_iteration, population_fitted_q, FqiConfig, FqiOutcome, StageFit};
pub use hypothesis::{fit_stage, FitContext, HypothesisSpace, InputMode, LinearBasis, QFunction, RegressionPair};
pub use policy::{Policy, TabularPolicy};
pub use replay::{ReplayMemory, Sampling, Transition};

use thiserror::Error;

use crate::envs::EnvError;
use crate::nets::NetError;

#[derive(Debug, Error)]
pub enum QlearnError {
    #[error("stage {stage} outside 0..{horizon}")]
    StageOutOfRange { stage: usize, horizon: usize },
    #[error("no regression pairs for stage {0}")]
    EmptyStage(usize),
    #[error("expected {expected} hypothesis spaces (or one), got {found}")]
    SpaceCount { expected: usize, found: usize },
    #[error("invalid hypothesis space: {0}")]
    InvalidSpace(String),
    #[error("training diverged at stage {stage}: {source}")]
    Divergence { stage: usize, source: NetError },
    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, loss: f64 },
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error("at least one rollout is required")]
    NoRollouts,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
