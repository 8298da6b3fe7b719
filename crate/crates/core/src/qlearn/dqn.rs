use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dp::argmax;
use super::eval::evaluate_policy;
use super::hypothesis::{InputMode, QFunction};
use super::policy::Policy;
use super::replay::{ReplayMemory, Sampling, Transition};
use super::QlearnError;
use crate::envs::Environment;
use crate::nets::{NetArchitecture, Optimizer, OptimizerKind, ReluNet, StepSchedule};
use crate::rng::RngContract;
use crate::scalar::relu;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    /// Hidden layer widths of the Q-network.
    pub widths: Vec<usize>,
    pub iterations: usize,
    pub env_steps_per_iteration: usize,
    pub minibatch: usize,
    pub minibatches_per_iteration: usize,
    pub replay_capacity: usize,
    /// Iterations before the first gradient step.
    pub warmup: usize,
    /// Iterations between target-network refreshes.
    pub target_period: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of `iterations` over which epsilon is annealed linearly.
    pub epsilon_fraction: f64,
    pub sampling: Sampling,
    pub optimizer: OptimizerKind,
    pub step: StepSchedule,
    pub grad_clip: Option<f64>,
    /// Rewards are divided by this before storage.
    pub reward_scale: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            widths: vec![32],
            iterations: 20_000,
            env_steps_per_iteration: 1,
            minibatch: 16,
            minibatches_per_iteration: 1,
            replay_capacity: 10_000,
            warmup: 500,
            target_period: 100,
            gamma: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.5,
            sampling: Sampling::WithReplacement,
            optimizer: OptimizerKind::adam(),
            step: StepSchedule::Constant { rate: 1e-3 },
            grad_clip: Some(10.0),
            reward_scale: 1.0,
            eval_every: 1000,
            eval_episodes: 50,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), QlearnError> {
        let bad = |m: &str| Err(QlearnError::InvalidConfig(m.to_string()));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("network needs positive hidden widths");
        }
        if self.minibatch == 0 || self.env_steps_per_iteration == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("minibatch, env steps, eval period and eval episodes must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        let probs = [self.epsilon_start, self.epsilon_end];
        if probs.iter().any(|e| !(0.0..=1.0).contains(e)) || !(self.epsilon_fraction > 0.0) {
            return bad("epsilon schedule out of range");
        }
        if self.target_period == 0 || !(self.reward_scale > 0.0) {
            return bad("target period and reward scale must be positive");
        }
        Ok(())
    }

    pub fn epsilon(&self, iteration: usize) -> f64 {
        let span = self.epsilon_fraction * self.iterations as f64;
        let frac = if span > 0.0 { (iteration as f64 / span).min(1.0) } else { 1.0 };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub samples_consumed: u64,
    /// Mean minibatch loss since the previous checkpoint, if any step ran.
    pub train_loss: Option<f64>,
    /// Mean episode score of the greedy policy.
    pub eval_score: f64,
    pub eval_stderr: f64,
    pub eval_return: f64,
}

#[derive(Debug, Clone)]
pub struct DqnOutcome {
    pub policy: Policy,
    pub net: ReluNet<f64>,
    pub curve: Vec<CurvePoint>,
    pub samples_consumed: u64,
    pub updates: usize,
    /// Gradient steps skipped because the replay held too few transitions.
    pub starved_steps: usize,
}

/// `Q(state, a)` for every action point. The state part of the first layer
/// is computed once and the action part only over nonzero coordinates.
fn action_values(net: &ReluNet<f64>, state: &[f64], points: &[Vec<f64>], out: &mut Vec<f64>) {
    let (rows, cols) = net.arch.layer_shape(0);
    let ds = state.len();
    let w0 = &net.weights[0];
    let base: Vec<f64> = (0..rows)
        .map(|r| net.biases[0][r] + w0[r * cols..r * cols + ds].iter().zip(state).map(|(w, x)| w * x).sum::<f64>())
        .collect();
    let depth = net.arch.depth();
    let mut h: Vec<f64> = vec![0.0; rows];
    let mut next: Vec<f64> = Vec::new();
    let m = net.arch.clamp;
    out.clear();
    for p in points {
        h.copy_from_slice(&base);
        for (j, &pj) in p.iter().enumerate() {
            if pj != 0.0 {
                for (r, hr) in h.iter_mut().enumerate() {
                    *hr += w0[r * cols + ds + j] * pj;
                }
            }
        }
        h.iter_mut().for_each(|x| *x = relu(*x));
        let mut cur = std::mem::take(&mut h);
        for k in 1..depth {
            let (rk, ck) = net.arch.layer_shape(k);
            let w = &net.weights[k];
            next.clear();
            next.extend((0..rk).map(|r| {
                relu(w[r * ck..(r + 1) * ck].iter().zip(&cur).fold(net.biases[k][r], |acc, (a, b)| acc + a * b))
            }));
            std::mem::swap(&mut cur, &mut next);
        }
        let q: f64 = net.output.iter().zip(&cur).map(|(a, b)| a * b).sum();
        out.push(q.clamp(-m, m));
        cur.resize(rows, 0.0);
        h = cur;
    }
}

fn net_policy(net: &ReluNet<f64>, action_sets: &[Vec<Vec<f64>>]) -> Policy {
    Policy {
        stages: vec![QFunction::Net { net: net.clone() }; action_sets.len()],
        mode: InputMode::Markov,
        action_sets: action_sets.to_vec(),
    }
}

/// Online deep Q-learning with epsilon-greedy exploration, a replay memory
/// and a periodically frozen target network. One network serves all stages;
/// observations are expected to carry the stage. Each gradient step moves
/// `Q(s, a)` toward `r + gamma * max_a' Q_target(s', a')` (just `r` at the
/// last stage). `gamma = 0` gives the myopic learner.
///
/// Outputs are clamped to `T U / reward_scale`, a bound on every return.
pub fn dqn_train<E>(env: &E, cfg: &DqnConfig, rng: &RngContract) -> Result<DqnOutcome, QlearnError>
where
    E: Environment + ?Sized,
{
    cfg.validate()?;
    let spec = env.spec();
    let horizon = spec.horizon;
    let state_dim = spec.state_dims[0];
    let action_dim = spec.action_dims[0];
    if spec.state_dims.iter().any(|&d| d != state_dim) || spec.action_dims.iter().any(|&d| d != action_dim) {
        return Err(QlearnError::InvalidConfig("a shared network needs constant state and action dimensions".into()));
    }
    let points = &spec.action_sets;
    let clamp = horizon as f64 * spec.reward_bound / cfg.reward_scale;
    let arch = NetArchitecture::dense(state_dim + action_dim, cfg.widths.clone(), clamp)?;
    let mut net = ReluNet::init_glorot(arch, &mut rng.derive_stream("dqn-init", 0));
    let mut target = net.clone();
    let mut opt = Optimizer::new(cfg.optimizer.clone(), &net);
    let mut replay = ReplayMemory::new(cfg.replay_capacity, cfg.sampling);
    let mut env_rng = rng.derive_stream("dqn-env", 0);
    let mut explore_rng = rng.derive_stream("dqn-explore", 0);
    let mut sample_rng = rng.derive_stream("dqn-replay", 0);
    // every checkpoint sees the same evaluation episodes
    let eval_rng = rng.derive_contract("dqn-eval", 0);

    let mut state = env.reset(&mut env_rng);
    let mut obs = env.observe(&state);
    let mut values = Vec::new();
    let mut samples_consumed = 0u64;
    let mut updates = 0usize;
    let mut starved = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut curve = Vec::new();
    let mut inputs: Vec<Vec<f64>> = vec![Vec::with_capacity(state_dim + action_dim); cfg.minibatch];
    let mut targets = vec![0.0; cfg.minibatch];

    for it in 0..cfg.iterations {
        let eps = cfg.epsilon(it);
        for _ in 0..cfg.env_steps_per_iteration {
            let t = env.stage(&state);
            let explore = explore_rng.random::<f64>() < eps;
            let a = if explore {
                explore_rng.random_range(0..spec.num_actions(t))
            } else {
                action_values(&net, &obs, &points[t], &mut values);
                argmax(&values)
            };
            let step = env.transition(&state, a, &mut env_rng)?;
            let next_obs = env.observe(&step.state);
            let terminal = t + 1 == horizon;
            replay.push(Transition {
                stage: t,
                state: std::mem::take(&mut obs),
                action: a,
                reward: step.reward / cfg.reward_scale,
                next_state: next_obs.clone(),
                terminal,
            });
            if terminal {
                state = env.reset(&mut env_rng);
                obs = env.observe(&state);
            } else {
                state = step.state;
                obs = next_obs;
            }
        }
        if it >= cfg.warmup {
            for _ in 0..cfg.minibatches_per_iteration {
                let Some(batch) = replay.sample(cfg.minibatch, &mut sample_rng) else {
                    starved += 1;
                    continue;
                };
                for (k, tr) in batch.iter().enumerate() {
                    let cont = if tr.terminal || cfg.gamma == 0.0 {
                        0.0
                    } else {
                        action_values(&target, &tr.next_state, &points[tr.stage + 1], &mut values);
                        cfg.gamma * values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    };
                    targets[k] = tr.reward + cont;
                    inputs[k].clear();
                    inputs[k].extend_from_slice(&tr.state);
                    inputs[k].extend_from_slice(&points[tr.stage][tr.action]);
                }
                let mut grad = net.gradient(inputs.iter().map(|x| x.as_slice()).zip(targets.iter().copied()));
                if !grad.loss.is_finite() {
                    return Err(QlearnError::NonFiniteLoss { iteration: it, loss: grad.loss });
                }
                if let Some(limit) = cfg.grad_clip {
                    let norm = grad.norm();
                    if norm > limit {
                        grad.scale(limit / norm);
                    }
                }
                opt.apply(&mut net, &grad, cfg.step.at(updates));
                updates += 1;
                samples_consumed += cfg.minibatch as u64;
                loss_sum += grad.loss;
                loss_count += 1;
            }
        }
        if (it + 1) % cfg.target_period == 0 {
            target = net.clone();
        }
        if (it + 1) % cfg.eval_every == 0 {
            let policy = net_policy(&net, points);
            let ev = evaluate_policy(env, &policy, cfg.eval_episodes, &eval_rng)?;
            curve.push(CurvePoint {
                iteration: it + 1,
                samples_consumed,
                train_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
                eval_score: ev.scores.mean,
                eval_stderr: ev.scores.stderr,
                eval_return: ev.returns.mean,
            });
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    Ok(DqnOutcome { policy: net_policy(&net, points), net, curve, samples_consumed, updates, starved_steps: starved })
}

/// Curve as CSV: `iteration,samples_consumed,train_loss,eval_score,eval_stderr,seed`.
pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], seed: u64, out: W) -> Result<(), QlearnError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "samples_consumed", "train_loss", "eval_score", "eval_stderr", "seed"])?;
    for p in curve {
        w.write_record([
            p.iteration.to_string(),
            p.samples_consumed.to_string(),
            p.train_loss.map(|l| l.to_string()).unwrap_or_default(),
            p.eval_score.to_string(),
            p.eval_stderr.to_string(),
            seed.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TabularMdp;

    fn bandit() -> TabularMdp {
        TabularMdp::new(1, 3, 1, vec![1.0], vec![vec![vec![vec![1.0]; 3]]], vec![vec![vec![0.1, 0.5, 0.9]]], 0.0).unwrap()
    }

    #[test]
    fn fast_action_values_match_forward() {
        let arch = NetArchitecture::dense(5, vec![7, 6], 100.0).unwrap();
        let net = ReluNet::init_glorot(arch, &mut RngContract::new(3).derive_stream("n", 0));
        let points: Vec<Vec<f64>> = (0..3).map(|a| (0..3).map(|j| if j == a { 1.0 } else { 0.0 }).collect()).collect();
        let state = [0.2, 0.7];
        let mut out = Vec::new();
        action_values(&net, &state, &points, &mut out);
        for (a, p) in points.iter().enumerate() {
            let x: Vec<f64> = state.iter().chain(p).copied().collect();
            assert!((out[a] - net.forward(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn myopic_bandit_learns_reward_table() {
        let env = bandit();
        let cfg = DqnConfig {
            widths: vec![16],
            iterations: 4000,
            warmup: 100,
            gamma: 0.0,
            eval_every: 1000,
            eval_episodes: 5,
            step: StepSchedule::Constant { rate: 3e-3 },
            ..Default::default()
        };
        let out = dqn_train(&env, &cfg, &RngContract::new(7)).unwrap();
        let q = out.policy.q_values(0, &[0.5]);
        for (est, truth) in q.iter().zip([0.1, 0.5, 0.9]) {
            assert!((est - truth).abs() <= 0.05, "{q:?}");
        }
        assert_eq!(out.curve.len(), 4);
    }

    #[test]
    fn warmup_blocks_updates() {
        let env = bandit();
        let cfg = DqnConfig { iterations: 300, warmup: 500, eval_every: 100, eval_episodes: 3, ..Default::default() };
        let out = dqn_train(&env, &cfg, &RngContract::new(1)).unwrap();
        assert_eq!(out.updates, 0);
        assert!(out.curve.iter().all(|p| p.samples_consumed == 0 && p.train_loss.is_none()));
        assert!(out.curve.windows(2).all(|w| w[0].eval_score == w[1].eval_score));
    }

    #[test]
    fn without_replacement_accounting() {
        let env = bandit();
        let cfg = DqnConfig {
            iterations: 900,
            warmup: 500,
            env_steps_per_iteration: 16,
            sampling: Sampling::WithoutReplacement,
            replay_capacity: 100_000,
            eval_every: 300,
            eval_episodes: 2,
            ..Default::default()
        };
        let out = dqn_train(&env, &cfg, &RngContract::new(2)).unwrap();
        assert_eq!(out.starved_steps, 0);
        assert_eq!(out.samples_consumed, 16 * 400);
        let consumed: Vec<u64> = out.curve.iter().map(|p| p.samples_consumed).collect();
        assert_eq!(consumed, vec![0, 16 * 100, 16 * 400]);
    }

    #[test]
    fn identical_seeds_identical_curves() {
        let env = TabularMdp::benchmark(0);
        let cfg = DqnConfig { iterations: 1500, warmup: 200, eval_every: 500, eval_episodes: 20, ..Default::default() };
        let a = dqn_train(&env, &cfg, &RngContract::new(5)).unwrap();
        let b = dqn_train(&env, &cfg, &RngContract::new(5)).unwrap();
        assert_eq!(a.curve, b.curve);
        let mut buf = Vec::new();
        write_curve_csv(&a.curve, 5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,samples_consumed,train_loss,eval_score,eval_stderr,seed\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
