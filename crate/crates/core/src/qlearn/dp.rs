use crate::envs::TabularView;

/// Exact optimal Q-tables by backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// `q[t][s][a]` for `t < T`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// `v[t][s]` for `t <= T`, with `v[T] = 0`.
    pub v: Vec<Vec<f64>>,
    /// Greedy optimal action, lowest index on ties.
    pub policy: Vec<Vec<usize>>,
    /// `V*` under the initial distribution.
    pub value: f64,
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Continuation value `r(s, a) + sum_{s'} P(s' | s, a) next(s')`, summed in
/// the order of the transition row.
pub(crate) fn backup<V: TabularView + ?Sized>(view: &V, t: usize, s: usize, a: usize, next: &[f64]) -> f64 {
    let cont: f64 = view.transition_row(t, s, a).iter().map(|&(s2, p)| p * next[s2]).sum();
    view.mean_reward(t, s, a) + cont
}

pub fn dp_solve<V: TabularView + ?Sized>(view: &V) -> DpSolution {
    let horizon = view.stages();
    let n = view.n_states();
    let mut v = vec![vec![0.0; n]; horizon + 1];
    let mut q = vec![Vec::new(); horizon];
    let mut policy = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let table: Vec<Vec<f64>> =
            (0..n).map(|s| (0..view.n_actions(t)).map(|a| backup(view, t, s, a, &v[t + 1])).collect()).collect();
        policy[t] = table.iter().map(|row| argmax(row)).collect();
        v[t] = table.iter().zip(&policy[t]).map(|(row, &a)| row[a]).collect();
        q[t] = table;
    }
    let value = view.initial().iter().zip(&v[0]).map(|(p, x)| p * x).sum();
    DpSolution { q, v, policy, value }
}

impl DpSolution {
    /// Smallest lead of the best action over the runner-up across all cells;
    /// infinite when every stage has a single action.
    pub fn min_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for row in self.q.iter().flatten() {
            let best = row[argmax(row)];
            let second = row
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != argmax(row))
                .map(|(_, &x)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            gap = gap.min(best - second);
        }
        gap
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TabularMdp;

    /// Two states, two actions; action `a` moves to state `a`.
    fn chain(rewards: Vec<Vec<Vec<f64>>>) -> TabularMdp {
        let moves = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2];
        TabularMdp::new(2, 2, 2, vec![1.0, 0.0], vec![moves.clone(), moves], rewards, 0.0).unwrap()
    }

    #[test]
    fn single_stage_is_reward_table() {
        let mdp = TabularMdp::new(
            2,
            2,
            1,
            vec![0.5, 0.5],
            vec![vec![vec![vec![0.5, 0.5]; 2]; 2]],
            vec![vec![vec![0.3, -0.2], vec![0.0, 0.9]]],
            0.0,
        )
        .unwrap();
        let sol = dp_solve(&mdp);
        assert_eq!(sol.q[0], mdp.rewards[0]);
        assert_eq!(sol.policy[0], vec![0, 1]);
        assert!((sol.value - 0.6).abs() < 1e-15);
    }

    #[test]
    fn hand_backward_induction() {
        let r = vec![vec![vec![0.1, 0.2], vec![0.4, 0.0]], vec![vec![0.5, 0.3], vec![0.0, 0.6]]];
        let sol = dp_solve(&chain(r.clone()));
        // Q1(s, a) = r1(s, a) + max_a' r2(a, a')
        let v2 = [0.5, 0.6];
        for s in 0..2 {
            for a in 0..2 {
                assert!((sol.q[0][s][a] - (r[0][s][a] + v2[a])).abs() < 1e-15);
            }
        }
        assert_eq!(sol.policy[0], vec![1, 0]);
        assert!((sol.value - 0.8).abs() < 1e-15);
    }

    #[test]
    fn last_stage_shift_propagates() {
        let mdp = TabularMdp::benchmark(0);
        let base = dp_solve(&mdp);
        let mut shifted = mdp.clone();
        let last = shifted.rewards.len() - 1;
        for row in shifted.rewards[last].iter_mut().flatten() {
            *row += 0.25;
        }
        let sol = dp_solve(&shifted);
        for (a, b) in base.q.iter().flatten().flatten().zip(sol.q.iter().flatten().flatten()) {
            assert!((b - a - 0.25).abs() < 1e-12);
        }
        assert_eq!(base.policy, sol.policy);
    }

    #[test]
    fn benchmark_has_clear_gaps() {
        let sol = dp_solve(&TabularMdp::benchmark(0));
        assert!(sol.min_gap() >= 0.15);
        assert_eq!(sol.horizon(), 3);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
