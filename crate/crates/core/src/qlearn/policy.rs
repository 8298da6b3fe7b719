use serde::{Deserialize, Serialize};

use super::dp::argmax;
use super::hypothesis::{InputMode, QFunction};
use crate::envs::{Actor, Environment, History, TabularEnv};
use crate::rng::Stream;

/// Greedy policy of fitted stage functions `Q_1..Q_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub stages: Vec<QFunction>,
    pub mode: InputMode,
    /// Action points per stage.
    pub action_sets: Vec<Vec<Vec<f64>>>,
}

impl Policy {
    pub fn q_values(&self, stage: usize, state: &[f64]) -> Vec<f64> {
        self.stages[stage].values(state, &self.action_sets[stage])
    }

    /// Argmax of `Q_t(state, .)`, lowest index on ties.
    pub fn greedy(&self, stage: usize, state: &[f64]) -> usize {
        argmax(&self.q_values(stage, state))
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }
}

impl<E: Environment + ?Sized> Actor<E> for Policy {
    fn act(&self, env: &E, state: &E::State, history: &History, _: &mut Stream) -> usize {
        let t = env.stage(state);
        match self.mode {
            InputMode::Markov => self.greedy(t, history.current()),
            InputMode::History => {
                let x = self.mode.encode(&history.observations, &history.actions, t);
                self.greedy(t, &x)
            }
        }
    }
}

/// Action table `actions[t][s]` over the cells of a tabular environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub actions: Vec<Vec<usize>>,
}

impl<E: TabularEnv> Actor<E> for TabularPolicy {
    fn act(&self, env: &E, state: &E::State, _: &History, _: &mut Stream) -> usize {
        self.actions[env.stage(state)][env.state_index(state)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlearn::LinearBasis;

    #[test]
    fn argmax_invariant_under_affine_maps() {
        let points: Vec<Vec<f64>> = (0..4).map(|a| vec![a as f64 / 4.0]).collect();
        let make = |scale: f64| Policy {
            stages: vec![QFunction::Linear {
                basis: LinearBasis::PerActionAffine,
                n_actions: 4,
                coef: [0.1, 1.0, 0.3, -1.0, 0.3, 0.2, -0.2, 2.0].iter().map(|c| c * scale).collect(),
                clamp: 1e9,
            }],
            mode: InputMode::Markov,
            action_sets: vec![points.clone()],
        };
        let base = make(1.0);
        let scaled = make(3.5);
        for i in 0..50 {
            let x = [i as f64 / 50.0];
            let shifted: Vec<f64> = base.q_values(0, &x).iter().map(|q| q + 7.0).collect();
            assert_eq!(base.greedy(0, &x), scaled.greedy(0, &x));
            assert_eq!(base.greedy(0, &x), argmax(&shifted));
        }
    }

    #[test]
    fn tabular_policy_json_round_trips() {
        use crate::envs::{generate_dataset, Behavior, TabularMdp};
        use crate::qlearn::{fitted_q_iteration, FqiConfig, HypothesisSpace};
        use crate::rng::RngContract;

        let env = TabularMdp::benchmark(1);
        let rng = RngContract::new(1);
        let data = generate_dataset(&env, &Behavior::Uniform, 200, &rng).unwrap();
        let fit = fitted_q_iteration(&data, &[HypothesisSpace::Tabular { bins: 4 }], &FqiConfig::default(), &rng).unwrap();
        let back: Policy = serde_json::from_str(&fit.policy.to_json()).unwrap();
        assert_eq!(back, fit.policy);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let policy = Policy {
            stages: vec![QFunction::Zero],
            mode: InputMode::Markov,
            action_sets: vec![vec![vec![0.0], vec![1.0]]],
        };
        assert_eq!(policy.greedy(0, &[0.3]), 0);
    }
}
