//! Environments behind one interface: tabular and piecewise MDPs with exactly
//! known optimal Q-functions, the four-echelon beer game, and a slate
//! recommender with interest evolution.

mod beer;
mod recsys;
mod tabular;

pub use beer::{
    base_stock_level, base_stock_policy, beer_game_period, beer_game_shaped_reward, beer_game_step, BaseStockPolicy,
    BeerConfig, BeerGame, BeerState, DemandLaw, PeriodOutcome, RewardKind, ECHELONS,
};
pub use recsys::{
    click_probabilities, recommender_step, Document, Recommender, RecsysConfig, RecsysState,
    RewardMode,
};
pub use tabular::{PiecewiseMdp, PiecewiseState, TabularEnv, TabularMdp, TabularState, TabularView};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{DataError, Dataset, ProblemSpec, Provenance, Trajectory};
use crate::rng::{RngContract, Stream};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("reward {value} at stage {stage} exceeds the bound {bound}")]
    RewardBound { stage: usize, value: f64, bound: f64 },
    #[error("action {action} outside the {available} actions of stage {stage}")]
    InvalidAction { stage: usize, action: usize, available: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("dataset size must be at least 1")]
    EmptyDataset,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Result of one transition. `score` is the evaluation metric contribution,
/// which differs from `reward` when the learning signal is shaped or noisy.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<St> {
    pub state: St,
    pub reward: f64,
    pub score: f64,
}

/// Finite-horizon environment. States carry their own stage counter.
pub trait Environment: Sync {
    type State: Clone + Send + Sync;

    fn spec(&self) -> &ProblemSpec;

    fn name(&self) -> String;

    fn reset(&self, rng: &mut Stream) -> Self::State;

    /// Feature vector in the unit box, of dimension `spec().state_dims[stage]`.
    fn observe(&self, state: &Self::State) -> Vec<f64>;

    fn stage(&self, state: &Self::State) -> usize;

    /// Unchecked transition; callers go through [`Environment::transition`].
    fn step(&self, state: &Self::State, action: usize, rng: &mut Stream) -> Step<Self::State>;

    fn horizon(&self) -> usize {
        self.spec().horizon
    }

    /// [`Environment::step`] with the action range and reward bound enforced.
    /// A reward above `U` is a configuration error, never clamped.
    fn transition(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut Stream,
    ) -> Result<Step<Self::State>, EnvError> {
        let stage = self.stage(state);
        let available = self.spec().num_actions(stage);
        if action >= available {
            return Err(EnvError::InvalidAction { stage, action, available });
        }
        let step = self.step(state, action, rng);
        let bound = self.spec().reward_bound;
        if !(step.reward.abs() <= bound) {
            return Err(EnvError::RewardBound { stage, value: step.reward, bound });
        }
        Ok(step)
    }
}

/// Observations and action points seen so far in an episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl History {
    pub fn current(&self) -> &[f64] {
        self.observations.last().expect("history holds the current observation")
    }
}

/// Action-selection rule.
pub trait Actor<E: Environment + ?Sized>: Sync {
    fn act(&self, env: &E, state: &E::State, history: &History, rng: &mut Stream) -> usize;
}

/// Uniform over the stage action set.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformActor;

impl<E: Environment + ?Sized> Actor<E> for UniformActor {
    fn act(&self, env: &E, state: &E::State, _: &History, rng: &mut Stream) -> usize {
        rng.random_range(0..env.spec().num_actions(env.stage(state)))
    }
}

/// Uniform with probability `epsilon`, otherwise the wrapped actor.
pub struct EpsilonGreedy<'a, E: Environment + ?Sized> {
    pub policy: &'a dyn Actor<E>,
    pub epsilon: f64,
}

impl<E: Environment + ?Sized> Actor<E> for EpsilonGreedy<'_, E> {
    fn act(&self, env: &E, state: &E::State, history: &History, rng: &mut Stream) -> usize {
        // Draw first so the stream advances the same way for every epsilon.
        let explore = rng.random::<f64>() < self.epsilon;
        if explore {
            UniformActor.act(env, state, history, rng)
        } else {
            self.policy.act(env, state, history, rng)
        }
    }
}

/// One full episode.
#[derive(Debug, Clone)]
pub struct Episode<St> {
    pub trajectory: Trajectory,
    /// Environment states `S_1..S_{T+1}`.
    pub states: Vec<St>,
    pub action_indices: Vec<usize>,
    pub score: f64,
}

pub fn rollout<E, A>(env: &E, actor: &A, rng: &mut Stream) -> Result<Episode<E::State>, EnvError>
where
    E: Environment + ?Sized,
    A: Actor<E> + ?Sized,
{
    let horizon = env.horizon();
    let mut state = env.reset(rng);
    let mut history = History::default();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut rewards = Vec::with_capacity(horizon);
    let mut indices = Vec::with_capacity(horizon);
    let mut score = 0.0;
    for t in 0..horizon {
        history.observations.push(env.observe(&state));
        let a = actor.act(env, &state, &history, rng);
        let step = env.transition(&state, a, rng)?;
        history.actions.push(env.spec().action_point(t, a).to_vec());
        states.push(state);
        rewards.push(step.reward);
        indices.push(a);
        score += step.score;
        state = step.state;
    }
    history.observations.push(env.observe(&state));
    states.push(state);
    Ok(Episode {
        trajectory: Trajectory { states: history.observations, actions: history.actions, rewards },
        states,
        action_indices: indices,
        score,
    })
}

/// Behavior policy used to collect a dataset.
pub enum Behavior<'a, E: Environment + ?Sized> {
    Uniform,
    EpsilonGreedy { policy: &'a dyn Actor<E>, epsilon: f64 },
}

impl<E: Environment + ?Sized> Behavior<'_, E> {
    fn label(&self) -> String {
        match self {
            Behavior::Uniform => "uniform".into(),
            Behavior::EpsilonGreedy { epsilon, .. } => format!("epsilon-greedy({epsilon})"),
        }
    }
}

/// `m` independent trajectories; trajectory `i` uses stream `("trajectory", i)`.
///
/// Under uniform behavior the dataset's `mu` is `max_t |A_t|`.
pub fn generate_dataset<E>(
    env: &E,
    behavior: &Behavior<'_, E>,
    m: usize,
    rng: &RngContract,
) -> Result<Dataset, EnvError>
where
    E: Environment + ?Sized,
{
    if m == 0 {
        return Err(EnvError::EmptyDataset);
    }
    let run = |i: usize| {
        let mut stream = rng.derive_stream("trajectory", i as u64);
        match behavior {
            Behavior::Uniform => rollout(env, &UniformActor, &mut stream),
            Behavior::EpsilonGreedy { policy, epsilon } => {
                let actor = EpsilonGreedy { policy: *policy, epsilon: *epsilon };
                rollout(env, &actor, &mut stream)
            }
        }
        .map(|e| e.trajectory)
    };
    let trajectories = (0..m).into_par_iter().map(run).collect::<Result<Vec<_>, _>>()?;
    let mut spec = env.spec().clone();
    if matches!(behavior, Behavior::Uniform) {
        spec = spec.with_uniform_mu();
    }
    let provenance =
        Provenance { environment: env.name(), behavior: behavior.label(), seed: rng.master_seed };
    Ok(Dataset::new(spec, provenance, trajectories)?)
}
