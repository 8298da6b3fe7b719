use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dp::dp_solve;
use super::QlearnError;
use crate::envs::{rollout, Actor, Environment, TabularEnv};
use crate::rng::RngContract;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if xs.iter().all(|&x| x == xs[0]) {
            return Self { mean: xs.first().copied().unwrap_or(f64::NAN), stderr: 0.0, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Cumulative reward.
    pub returns: Summary,
    /// Cumulative environment score (cost in the beer game, expected
    /// engagement in the recommender).
    pub scores: Summary,
}

/// Monte Carlo value of `actor`; rollout `i` runs on stream `("eval", i)`
/// and results are reduced in rollout order.
pub fn evaluate_policy<E, A>(env: &E, actor: &A, n_rollouts: usize, rng: &RngContract) -> Result<Evaluation, QlearnError>
where
    E: Environment + ?Sized,
    A: Actor<E> + ?Sized,
{
    if n_rollouts == 0 {
        return Err(QlearnError::NoRollouts);
    }
    let results = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let ep = rollout(env, actor, &mut rng.derive_stream("eval", i as u64))?;
            Ok((ep.trajectory.ret(), ep.score))
        })
        .collect::<Result<Vec<_>, QlearnError>>()?;
    let (returns, scores): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    Ok(Evaluation { returns: Summary::of(&returns), scores: Summary::of(&scores) })
}

/// Both sides of `V*(s_1) - V_pi(s_1) = E_pi sum_t (V*_t(S_t) - Q*_t(S_t, A_t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_stderr: f64,
    pub rhs_stderr: f64,
    /// `sqrt(lhs_stderr^2 + rhs_stderr^2)`.
    pub combined_stderr: f64,
    pub agrees: bool,
}

/// `lhs` uses the exact `V*` and a Monte Carlo `V_pi`; `rhs` is the Monte
/// Carlo mean of the summed temporal differences along the same rollouts.
pub fn regret_identity_check<E, A>(env: &E, actor: &A, n_rollouts: usize, rng: &RngContract) -> Result<RegretCheck, QlearnError>
where
    E: TabularEnv,
    A: Actor<E> + ?Sized,
{
    if n_rollouts == 0 {
        return Err(QlearnError::NoRollouts);
    }
    let sol = dp_solve(env);
    let results = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let ep = rollout(env, actor, &mut rng.derive_stream("regret", i as u64))?;
            let gaps: f64 = ep
                .action_indices
                .iter()
                .enumerate()
                .map(|(t, &a)| {
                    let s = env.state_index(&ep.states[t]);
                    sol.v[t][s] - sol.q[t][s][a]
                })
                .sum();
            Ok((ep.trajectory.ret(), gaps))
        })
        .collect::<Result<Vec<_>, QlearnError>>()?;
    let (returns, gaps): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    let value = Summary::of(&returns);
    let gap = Summary::of(&gaps);
    let lhs = sol.value - value.mean;
    let combined = value.stderr.hypot(gap.stderr);
    // slack for the rounding in exact, noise-free cases
    let agrees = (lhs - gap.mean).abs() <= 3.0 * combined + 1e-12;
    Ok(RegretCheck { lhs, rhs: gap.mean, lhs_stderr: value.stderr, rhs_stderr: gap.stderr, combined_stderr: combined, agrees })
}
