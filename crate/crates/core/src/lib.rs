//! Finite-horizon deep Q-learning laboratory.
//!
//! * [`data`] and [`rng`]: problem description, trajectories, datasets and
//!   deterministic random streams.
//! * [`nets`]: ReLU networks with exact parameter counts and backpropagation.
//! * [`approx`]: spatially sparse piecewise-constant/smooth targets and the
//!   explicit two-hidden-layer approximating networks.
//! * [`capacity`]: covering-number and generalization-bound evaluators.
//! * [`qlearn`]: fitted-Q iteration, DQN, dynamic programming and policy evaluation.
//! * [`envs`]: tabular/piecewise MDPs, the beer game and a slate recommender.
//! * [`harness`]: experiment configs, studies, CSV output and run manifests.

pub mod approx;
pub mod capacity;
pub mod data;
pub mod envs;
pub mod harness;
pub mod nets;
pub mod qlearn;
pub mod rng;
pub mod scalar;

pub use scalar::Scalar;

pub type ReluNet64 = nets::ReluNet<f64>;
pub type ReluNet32 = nets::ReluNet<f32>;
pub type NetArchitecture64 = nets::NetArchitecture<f64>;
pub type PiecewiseConstant64 = approx::PiecewiseConstantSpec<f64>;
pub type BoundInputs64 = capacity::BoundInputs<f64>;
pub type BoundReport64 = capacity::BoundReport<f64>;
