//! Problem description, trajectories and datasets.
//!
//! Stages are 0-based in code (`0..horizon`); reports print them 1-based.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
    #[error("trajectory {index} rejected: {violation}")]
    InvalidTrajectory { index: usize, violation: Violation },
    #[error("dataset file malformed at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Finite-horizon decision problem with finite action grids in the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub horizon: usize,
    /// `d_{s,t}` for `t = 1..=T+1`; the final entry describes the terminal state.
    pub state_dims: Vec<usize>,
    /// `d_{a,t}` for `t = 1..=T`.
    pub action_dims: Vec<usize>,
    /// Per-stage action points inside `[0,1]^{d_{a,t}}`.
    pub action_sets: Vec<Vec<Vec<f64>>>,
    /// Uniform bound `U` on every reward.
    pub reward_bound: f64,
    /// Behavior-policy constant: every action has probability at least `1/mu`.
    pub mu: f64,
}

impl ProblemSpec {
    pub fn new(
        horizon: usize,
        state_dims: Vec<usize>,
        action_sets: Vec<Vec<Vec<f64>>>,
        reward_bound: f64,
        mu: f64,
    ) -> Result<Self, DataError> {
        let action_dims = action_sets
            .iter()
            .map(|set| set.first().map_or(0, Vec::len))
            .collect();
        let spec = Self {
            horizon,
            state_dims,
            action_dims,
            action_sets,
            reward_bound,
            mu,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Same spec with `mu` set for the uniform behavior policy.
    pub fn with_uniform_mu(mut self) -> Self {
        self.mu = self.max_actions() as f64;
        self
    }

    fn check(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.state_dims.len() != self.horizon + 1 {
            return bad(format!(
                "expected {} state dimensions, got {}",
                self.horizon + 1,
                self.state_dims.len()
            ));
        }
        if self.action_sets.len() != self.horizon || self.action_dims.len() != self.horizon {
            return bad(format!("expected {} action sets", self.horizon));
        }
        for (t, set) in self.action_sets.iter().enumerate() {
            if set.is_empty() {
                return bad(format!("action set at stage {} is empty", t + 1));
            }
            for point in set {
                if point.len() != self.action_dims[t] {
                    return bad(format!("action dimension mismatch at stage {}", t + 1));
                }
                if point.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return bad(format!("action outside the unit box at stage {}", t + 1));
                }
            }
        }
        if !(self.reward_bound >= 0.0) || !self.reward_bound.is_finite() {
            return bad("reward bound must be finite and nonnegative".into());
        }
        if !(self.mu >= 1.0) {
            return bad("mu must be at least 1".into());
        }
        Ok(())
    }

    pub fn num_actions(&self, stage: usize) -> usize {
        self.action_sets[stage].len()
    }

    pub fn max_actions(&self) -> usize {
        self.action_sets.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Whether a uniform behavior policy satisfies the `1/mu` lower bound.
    pub fn uniform_behavior_admissible(&self) -> bool {
        self.mu >= self.max_actions() as f64
    }

    /// Index of `point` in the stage action set (exact match).
    pub fn action_index(&self, stage: usize, point: &[f64]) -> Option<usize> {
        self.action_sets[stage].iter().position(|p| p.as_slice() == point)
    }

    pub fn action_point(&self, stage: usize, index: usize) -> &[f64] {
        &self.action_sets[stage][index]
    }
}

/// One episode: `T+1` states, `T` actions, `T` rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    /// Sum of rewards.
    pub fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// First invariant a trajectory violates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    StateDimension { stage: usize },
    ActionNotInSet { stage: usize },
    OutsideUnitBox { stage: usize },
    RewardBound { stage: usize, value: f64, bound: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch { what, expected, found } => {
                write!(f, "length mismatch: expected {expected} {what}, found {found}")
            }
            Violation::StateDimension { stage } => {
                write!(f, "state dimension mismatch at stage {}", stage + 1)
            }
            Violation::ActionNotInSet { stage } => {
                write!(f, "action not in the action set at stage {}", stage + 1)
            }
            Violation::OutsideUnitBox { stage } => {
                write!(f, "state outside the unit box at stage {}", stage + 1)
            }
            Violation::RewardBound { stage, value, bound } => write!(
                f,
                "reward bound violated at stage {}: |{value}| > {bound}",
                stage + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validation {
    Accepted,
    Rejected(Violation),
}

impl Validation {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Validation::Accepted)
    }
}

pub fn validate_trajectory(traj: &Trajectory, spec: &ProblemSpec) -> Validation {
    let t = spec.horizon;
    let lengths = [
        ("states", t + 1, traj.states.len()),
        ("actions", t, traj.actions.len()),
        ("rewards", t, traj.rewards.len()),
    ];
    for (what, expected, found) in lengths {
        if expected != found {
            return Validation::Rejected(Violation::LengthMismatch { what, expected, found });
        }
    }
    for (stage, s) in traj.states.iter().enumerate() {
        if s.len() != spec.state_dims[stage] {
            return Validation::Rejected(Violation::StateDimension { stage });
        }
        if s.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Validation::Rejected(Violation::OutsideUnitBox { stage });
        }
    }
    for (stage, a) in traj.actions.iter().enumerate() {
        if spec.action_index(stage, a).is_none() {
            return Validation::Rejected(Violation::ActionNotInSet { stage });
        }
    }
    for (stage, &r) in traj.rewards.iter().enumerate() {
        if !(r.abs() <= spec.reward_bound) {
            return Validation::Rejected(Violation::RewardBound {
                stage,
                value: r,
                bound: spec.reward_bound,
            });
        }
    }
    Validation::Accepted
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub environment: String,
    pub behavior: String,
    pub seed: u64,
}

/// `m` i.i.d. trajectories sharing one [`ProblemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: ProblemSpec,
    pub provenance: Provenance,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    spec: ProblemSpec,
    provenance: Provenance,
    count: usize,
}

/// Trajectory record with flat numeric arrays.
#[derive(Serialize, Deserialize)]
struct Record {
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
}

const FORMAT_TAG: &str = "dqlab-dataset/1";

impl Dataset {
    /// Builds a dataset, rejecting any trajectory that violates `spec`.
    pub fn new(
        spec: ProblemSpec,
        provenance: Provenance,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, DataError> {
        for (index, traj) in trajectories.iter().enumerate() {
            if let Validation::Rejected(violation) = validate_trajectory(traj, &spec) {
                return Err(DataError::InvalidTrajectory { index, violation });
            }
        }
        Ok(Self { spec, provenance, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Action indices of trajectory `i`.
    pub fn action_indices(&self, i: usize) -> Vec<usize> {
        self.trajectories[i]
            .actions
            .iter()
            .enumerate()
            .map(|(t, a)| self.spec.action_index(t, a).expect("validated trajectory"))
            .collect()
    }

    /// Line-delimited JSON: a header record, then one record per trajectory.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        let header = Header {
            format: FORMAT_TAG.to_string(),
            spec: self.spec.clone(),
            provenance: self.provenance.clone(),
            count: self.trajectories.len(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for traj in &self.trajectories {
            let record = Record {
                states: traj.states.iter().flatten().copied().collect(),
                actions: traj.actions.iter().flatten().copied().collect(),
                rewards: traj.rewards.clone(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, DataError> {
        let mut lines = input.lines().enumerate();
        let (_, first) = lines.next().ok_or(DataError::Malformed {
            line: 1,
            reason: "missing header".into(),
        })?;
        let header: Header = serde_json::from_str(&first?)?;
        if header.format != FORMAT_TAG {
            return Err(DataError::Malformed {
                line: 1,
                reason: format!("unknown format tag {}", header.format),
            });
        }
        let spec = header.spec;
        spec.check()?;
        let mut trajectories = Vec::with_capacity(header.count);
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)?;
            let states = split_flat(&record.states, &spec.state_dims)
                .ok_or_else(|| malformed(n, "state array length"))?;
            let actions = split_flat(&record.actions, &spec.action_dims)
                .ok_or_else(|| malformed(n, "action array length"))?;
            trajectories.push(Trajectory { states, actions, rewards: record.rewards });
        }
        if trajectories.len() != header.count {
            return Err(malformed(0, "trajectory count differs from header"));
        }
        Dataset::new(spec, header.provenance, trajectories)
    }
}

fn malformed(line0: usize, reason: &str) -> DataError {
    DataError::Malformed { line: line0 + 1, reason: reason.to_string() }
}

fn split_flat(flat: &[f64], dims: &[usize]) -> Option<Vec<Vec<f64>>> {
    if flat.len() != dims.iter().sum::<usize>() {
        return None;
    }
    let mut out = Vec::with_capacity(dims.len());
    let mut at = 0;
    for &d in dims {
        out.push(flat[at..at + d].to_vec());
        at += d;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ProblemSpec {
        let actions = vec![vec![0.0], vec![1.0]];
        ProblemSpec::new(2, vec![1, 1, 1], vec![actions.clone(), actions], 1.0, 2.0).unwrap()
    }

    fn good() -> Trajectory {
        Trajectory {
            states: vec![vec![0.1], vec![0.5], vec![0.9]],
            actions: vec![vec![0.0], vec![1.0]],
            rewards: vec![0.5, -1.0],
        }
    }

    #[test]
    fn accepts_well_formed() {
        assert!(validate_trajectory(&good(), &spec()).is_accepted());
    }

    #[test]
    fn rejects_reward_over_bound() {
        let mut t = good();
        t.rewards[0] = 2.0;
        match validate_trajectory(&t, &spec()) {
            Validation::Rejected(v) => {
                assert!(matches!(v, Violation::RewardBound { stage: 0, .. }));
                assert!(v.to_string().contains("reward bound violated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_short_state_sequence() {
        let mut t = good();
        t.states.pop();
        match validate_trajectory(&t, &spec()) {
            Validation::Rejected(v) => assert!(v.to_string().contains("length mismatch")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_action() {
        let mut t = good();
        t.actions[1] = vec![0.5];
        assert_eq!(
            validate_trajectory(&t, &spec()),
            Validation::Rejected(Violation::ActionNotInSet { stage: 1 })
        );
    }

    #[test]
    fn spec_invariants() {
        assert!(ProblemSpec::new(0, vec![1], vec![], 1.0, 1.0).is_err());
        assert!(ProblemSpec::new(1, vec![1, 1], vec![vec![]], 1.0, 1.0).is_err());
        assert!(ProblemSpec::new(1, vec![1, 1], vec![vec![vec![1.5]]], 1.0, 1.0).is_err());
        let s = spec();
        assert!(s.uniform_behavior_admissible());
        let mut tight = s.clone();
        tight.mu = 1.0;
        assert!(!tight.uniform_behavior_admissible());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t2 = good();
        t2.rewards = vec![0.1 + 0.2, -1.0 / 3.0];
        let ds = Dataset::new(
            spec(),
            Provenance { environment: "toy".into(), behavior: "uniform".into(), seed: 3 },
            vec![good(), t2],
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = Dataset::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.trajectories.iter().zip(&ds.trajectories) {
            for (x, y) in a.rewards.iter().zip(&b.rewards) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
