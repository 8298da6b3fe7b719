//! Deterministic stream derivation.
//!
//! Every random draw in the crate comes from a stream derived from a master
//! seed, a component label and an index. The derivation hashes the triple with
//! SHA-256 and seeds a ChaCha8 generator, so streams are identical across runs
//! and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Random stream handed to environments, trainers and samplers.
pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngContract {
    pub master_seed: u64,
}

impl RngContract {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Child seed for `(label, index)`.
    pub fn child_seed(&self, label: &str, index: u64) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        seed
    }

    pub fn derive_stream(&self, label: &str, index: u64) -> Stream {
        Stream::from_seed(self.child_seed(label, index))
    }

    /// A contract whose master seed is itself derived; used to hand a
    /// sub-component its own seed space.
    pub fn derive_contract(&self, label: &str, index: u64) -> RngContract {
        let seed = self.child_seed(label, index);
        let mut head = [0u8; 8];
        head.copy_from_slice(&seed[..8]);
        RngContract::new(u64::from_le_bytes(head))
    }
}

/// Free-function form of [`RngContract::derive_stream`].
pub fn derive_stream(rng: &RngContract, label: &str, index: u64) -> Stream {
    rng.derive_stream(label, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(s: &mut Stream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.random::<u64>()).collect()
    }

    #[test]
    fn same_triple_same_stream() {
        let c = RngContract::new(7);
        let a = draws(&mut c.derive_stream("rollout", 0), 100);
        let b = draws(&mut c.derive_stream("rollout", 0), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn index_and_seed_change_stream() {
        let c7 = RngContract::new(7);
        let c8 = RngContract::new(8);
        let base = c7.derive_stream("rollout", 0).random::<u64>();
        assert_ne!(base, c7.derive_stream("rollout", 1).random::<u64>());
        assert_ne!(base, c8.derive_stream("rollout", 0).random::<u64>());
        assert_ne!(base, c7.derive_stream("rollouts", 0).random::<u64>());
    }

    #[test]
    fn label_boundary_is_unambiguous() {
        // length prefix keeps ("ab", ..) and ("a", ..) apart even with equal suffix bytes
        let c = RngContract::new(1);
        assert_ne!(c.child_seed("ab", 0), c.child_seed("a", 0));
    }

    #[test]
    fn frozen_child_seeds() {
        // pins the derivation rule; a change here breaks reproducibility of every stored run
        assert_eq!(
            hex::encode(RngContract::new(7).child_seed("rollout", 0)),
            "66c6fcde11f2047bdaf9f80445763d1bda0461ca27b9921947226d4a850610f5"
        );
        assert_eq!(
            hex::encode(RngContract::new(0).child_seed("", 0)),
            "9d908ecfb6b256def8b49a7c504e6c889c4b0e41fe6ce3e01863dd7b61a20aa0"
        );
        assert_eq!(RngContract::new(3).derive_contract("seed", 2), RngContract::new(11515098962866238811));
    }
}
