use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    WithReplacement,
    /// Sampled transitions are discarded after use.
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub stage: usize,
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// `stage + 1 == T`: no bootstrap.
    pub terminal: bool,
}

/// FIFO buffer; the oldest transition is dropped once `capacity` is reached.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
    pub sampling: Sampling,
}

impl ReplayMemory {
    pub fn new(capacity: usize, sampling: Sampling) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.min(1 << 16)), sampling }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `k` uniform draws, or `None` when fewer than `k` are stored.
    pub fn sample(&mut self, k: usize, rng: &mut Stream) -> Option<Vec<Transition>> {
        if self.items.len() < k || k == 0 {
            return None;
        }
        Some(match self.sampling {
            Sampling::WithReplacement => {
                (0..k).map(|_| self.items[rng.random_range(0..self.items.len())].clone()).collect()
            }
            Sampling::WithoutReplacement => (0..k)
                .map(|_| {
                    let i = rng.random_range(0..self.items.len());
                    self.items.swap_remove_back(i).expect("index in range")
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngContract;

    fn tr(i: usize) -> Transition {
        Transition { stage: 0, state: vec![i as f64], action: 0, reward: 0.0, next_state: vec![], terminal: true }
    }

    #[test]
    fn capacity_is_respected() {
        let mut mem = ReplayMemory::new(3, Sampling::WithReplacement);
        for i in 0..10 {
            mem.push(tr(i));
            assert!(mem.len() <= 3);
        }
        let mut rng = RngContract::new(0).derive_stream("r", 0);
        let batch = mem.sample(50, &mut rng);
        assert!(batch.is_none());
        let batch = mem.sample(3, &mut rng).unwrap();
        assert!(batch.iter().all(|t| t.state[0] >= 7.0));
        assert_eq!(mem.len(), 3);
    }

    #[test]
    fn without_replacement_removes_items() {
        let mut mem = ReplayMemory::new(100, Sampling::WithoutReplacement);
        for i in 0..40 {
            mem.push(tr(i));
        }
        let mut rng = RngContract::new(1).derive_stream("r", 0);
        let mut seen = Vec::new();
        while let Some(batch) = mem.sample(16, &mut rng) {
            seen.extend(batch.into_iter().map(|t| t.state[0] as usize));
        }
        assert_eq!(seen.len(), 32);
        assert_eq!(mem.len(), 8);
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 32);
    }
}
