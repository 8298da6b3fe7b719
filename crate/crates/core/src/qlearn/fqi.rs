use serde::{Deserialize, Serialize};

use super::dp::backup;
use super::hypothesis::{fit_stage, FitContext, HypothesisSpace, InputMode, QFunction, RegressionPair};
use super::policy::Policy;
use super::QlearnError;
use crate::data::Dataset;
use crate::envs::TabularEnv;
use crate::nets::TrainerConfig;
use crate::rng::RngContract;

/// Regression pairs for stage `t` (0-based): input from the trajectory and
/// target `R_t + max_a' q_next(s_{t+1}, a')`, or `R_t` at the last stage.
pub fn bellman_targets(
    data: &Dataset,
    t: usize,
    q_next: &QFunction,
    mode: InputMode,
) -> Result<Vec<RegressionPair>, QlearnError> {
    let horizon = data.spec.horizon;
    if t >= horizon {
        return Err(QlearnError::StageOutOfRange { stage: t, horizon });
    }
    let last = t + 1 == horizon;
    Ok(data
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, traj)| {
            let state = mode.encode(&traj.states, &traj.actions, t);
            let cont = if last {
                0.0
            } else {
                let next = mode.encode(&traj.states, &traj.actions, t + 1);
                q_next.max_value(&next, &data.spec.action_sets[t + 1])
            };
            RegressionPair { state, action: data.action_indices(i)[t], target: traj.rewards[t] + cont }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiConfig {
    pub mode: InputMode,
    pub trainer: TrainerConfig,
}

impl Default for FqiConfig {
    fn default() -> Self {
        Self { mode: InputMode::Markov, trainer: TrainerConfig { iterations: 3000, ..Default::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFit {
    pub stage: usize,
    pub samples: usize,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FqiOutcome {
    pub policy: Policy,
    /// In stage order.
    pub fits: Vec<StageFit>,
}

/// Backward recursion: fit `Q_T` on raw rewards, then each earlier stage on
/// targets built from the stage after it. Every fit is clamped to `2U`.
///
/// `spaces` has one entry per stage, or a single entry used for all.
pub fn fitted_q_iteration(
    data: &Dataset,
    spaces: &[HypothesisSpace],
    cfg: &FqiConfig,
    rng: &RngContract,
) -> Result<FqiOutcome, QlearnError> {
    let horizon = data.spec.horizon;
    if data.is_empty() {
        return Err(QlearnError::EmptyStage(horizon.saturating_sub(1)));
    }
    if spaces.len() != horizon && spaces.len() != 1 {
        return Err(QlearnError::SpaceCount { expected: horizon, found: spaces.len() });
    }
    cfg.trainer.validate().map_err(|e| QlearnError::InvalidConfig(e.to_string()))?;
    let clamp = 2.0 * data.spec.reward_bound;
    let mut stages = vec![QFunction::Zero; horizon];
    let mut fits = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let next = if t + 1 < horizon { &stages[t + 1] } else { &QFunction::Zero };
        let pairs = bellman_targets(data, t, next, cfg.mode)?;
        let space = &spaces[if spaces.len() == 1 { 0 } else { t }];
        let ctx = FitContext { stage: t, points: &data.spec.action_sets[t], clamp, trainer: &cfg.trainer, rng };
        let (q, train_loss) = fit_stage(space, &pairs, &ctx)?;
        stages[t] = q;
        fits.push(StageFit { stage: t, samples: pairs.len(), train_loss });
    }
    fits.reverse();
    let policy = Policy { stages, mode: cfg.mode, action_sets: data.spec.action_sets.clone() };
    Ok(FqiOutcome { policy, fits })
}

/// Fitted-Q iteration with a tabular space in the full-information limit:
/// one pair per (state, action) cell whose target is the exact conditional
/// mean `r(s, a) + E[max_a' Q_{t+1}(s', a')]`.
pub fn population_fitted_q<E: TabularEnv>(env: &E, bins: usize) -> Result<Policy, QlearnError> {
    let spec = env.spec();
    let horizon = spec.horizon;
    let clamp = 2.0 * spec.reward_bound;
    let trainer = TrainerConfig::default();
    let rng = RngContract::new(0);
    let mut stages = vec![QFunction::Zero; horizon];
    for t in (0..horizon).rev() {
        let next_values: Vec<f64> = if t + 1 < horizon {
            (0..env.n_states()).map(|s| stages[t + 1].max_value(&env.features(s), &spec.action_sets[t + 1])).collect()
        } else {
            vec![0.0; env.n_states()]
        };
        let pairs: Vec<RegressionPair> = (0..env.n_states())
            .flat_map(|s| {
                let next_values = &next_values;
                (0..env.n_actions(t)).map(move |a| RegressionPair {
                    state: env.features(s),
                    action: a,
                    target: backup(env, t, s, a, next_values),
                })
            })
            .collect();
        let ctx = FitContext { stage: t, points: &spec.action_sets[t], clamp, trainer: &trainer, rng: &rng };
        stages[t] = fit_stage(&HypothesisSpace::Tabular { bins }, &pairs, &ctx)?.0;
    }
    Ok(Policy { stages, mode: InputMode::Markov, action_sets: spec.action_sets.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_dataset, Behavior, Environment, TabularMdp, TabularView};
    use crate::qlearn::{dp_solve, LinearBasis};

    fn constant(c: f64, n_actions: usize, dim: usize) -> QFunction {
        let mut coef = vec![0.0; n_actions * (dim + 1)];
        for a in 0..n_actions {
            coef[a * (dim + 1)] = c;
        }
        QFunction::Linear { basis: LinearBasis::PerActionAffine, n_actions, coef, clamp: 1e9 }
    }

    #[test]
    fn last_stage_targets_are_rewards_and_shift_by_constant() {
        let mdp = TabularMdp::benchmark(1);
        let data = generate_dataset(&mdp, &Behavior::Uniform, 20, &RngContract::new(3)).unwrap();
        let last = bellman_targets(&data, 2, &constant(5.0, 3, 1), InputMode::Markov).unwrap();
        for (p, traj) in last.iter().zip(&data.trajectories) {
            assert_eq!(p.target, traj.rewards[2]);
        }
        let mid = bellman_targets(&data, 1, &constant(0.25, 3, 1), InputMode::Markov).unwrap();
        for (p, traj) in mid.iter().zip(&data.trajectories) {
            assert_eq!(p.target, traj.rewards[1] + 0.25);
        }
        assert!(matches!(
            bellman_targets(&data, 3, &QFunction::Zero, InputMode::Markov),
            Err(QlearnError::StageOutOfRange { .. })
        ));
    }

    #[test]
    fn hand_max_over_two_actions() {
        // two stages, two states, two actions; next state always 1
        let p = vec![vec![vec![0.0, 1.0]; 2]; 2];
        let mdp = TabularMdp::new(2, 2, 2, vec![1.0, 0.0], vec![p.clone(), p], vec![vec![vec![0.1, 0.0]; 2]; 2], 0.0)
            .unwrap();
        let data = generate_dataset(&mdp, &Behavior::Uniform, 5, &RngContract::new(0)).unwrap();
        let mut table = std::collections::BTreeMap::new();
        table.insert((1, 0), 0.2);
        table.insert((1, 1), 0.7);
        let q_next = QFunction::Tabular { partition: crate::approx::CubicPartition::new(1, 2), table, clamp: 10.0 };
        for p in bellman_targets(&data, 0, &q_next, InputMode::Markov).unwrap() {
            let r = if p.action == 0 { 0.1 } else { 0.0 };
            assert!((p.target - (r + 0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_bandit_recovered_exactly() {
        let mdp = TabularMdp::new(
            2,
            2,
            1,
            vec![0.5, 0.5],
            vec![vec![vec![vec![0.5, 0.5]; 2]; 2]],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            0.0,
        )
        .unwrap();
        let data = generate_dataset(&mdp, &Behavior::Uniform, 400, &RngContract::new(8)).unwrap();
        let out = fitted_q_iteration(&data, &[HypothesisSpace::Tabular { bins: 2 }], &FqiConfig::default(), &RngContract::new(0))
            .unwrap();
        assert_eq!(out.policy.q_values(0, &mdp.features(0)), vec![1.0, 0.0]);
        assert_eq!(out.policy.q_values(0, &mdp.features(1)), vec![0.0, 1.0]);
        assert_eq!(out.fits.len(), 1);
        assert_eq!(out.fits[0].train_loss, 0.0);
    }

    #[test]
    fn population_limit_equals_dp_exactly() {
        for seed in 0..3 {
            let mdp = TabularMdp::benchmark(seed);
            let sol = dp_solve(&mdp);
            let policy = population_fitted_q(&mdp, mdp.n_states).unwrap();
            for t in 0..mdp.horizon() {
                for s in 0..mdp.n_states {
                    assert_eq!(policy.q_values(t, &mdp.features(s)), sol.q[t][s]);
                }
            }
        }
    }

    #[test]
    fn space_count_checked() {
        let mdp = TabularMdp::benchmark(0);
        let data = generate_dataset(&mdp, &Behavior::Uniform, 10, &RngContract::new(0)).unwrap();
        let spaces = vec![HypothesisSpace::Tabular { bins: 4 }; 2];
        assert!(matches!(
            fitted_q_iteration(&data, &spaces, &FqiConfig::default(), &RngContract::new(0)),
            Err(QlearnError::SpaceCount { .. })
        ));
    }
}
