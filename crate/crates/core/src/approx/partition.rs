use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// `N^d` sub-cubes of side `1/N` tiling `[0,1]^d`, indexed lexicographically
/// with the first coordinate most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubicPartition {
    pub dim: usize,
    pub resolution: usize,
}

impl CubicPartition {
    pub fn new(dim: usize, resolution: usize) -> Self {
        assert!(dim >= 1 && resolution >= 1, "partition needs d >= 1 and N >= 1");
        Self { dim, resolution }
    }

    pub fn num_cubes(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    /// `(j_1..j_d)` of cube `index`.
    pub fn multi_index(&self, index: usize) -> Vec<usize> {
        let mut rem = index;
        let mut out = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            out[k] = rem % self.resolution;
            rem /= self.resolution;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &j| acc * self.resolution + j)
    }

    /// Per-coordinate `[j_k/N, (j_k+1)/N]`.
    pub fn bounds<S: Scalar>(&self, index: usize) -> Vec<(S, S)> {
        let n = S::from_usize_lossy(self.resolution);
        self.multi_index(index)
            .into_iter()
            .map(|j| (S::from_usize_lossy(j) / n, S::from_usize_lossy(j + 1) / n))
            .collect()
    }

    pub fn center<S: Scalar>(&self, index: usize) -> Vec<S> {
        self.bounds::<S>(index)
            .into_iter()
            .map(|(a, b)| (a + b) / S::lit(2.0))
            .collect()
    }

    /// Cube containing `x`; the right end of `[0,1]` belongs to the last cube.
    pub fn locate<S: Scalar>(&self, x: &[S]) -> Option<usize> {
        if x.len() != self.dim {
            return None;
        }
        let n = self.resolution;
        let mut idx = 0;
        for &c in x {
            if !(c >= S::zero() && c <= S::one()) {
                return None;
            }
            let j = (c * S::from_usize_lossy(n)).floor().to_usize().unwrap_or(0).min(n - 1);
            idx = idx * n + j;
        }
        Some(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let p = CubicPartition::new(3, 4);
        for j in 0..p.num_cubes() {
            assert_eq!(p.flat_index(&p.multi_index(j)), j);
            let c: Vec<f64> = p.center(j);
            assert_eq!(p.locate(&c), Some(j));
        }
        assert_eq!(p.multi_index(1), vec![0, 0, 1]);
    }

    #[test]
    fn cubes_tile_the_box() {
        let p = CubicPartition::new(2, 6);
        let vol: f64 = (0..p.num_cubes())
            .map(|j| p.bounds::<f64>(j).iter().map(|(a, b)| b - a).product::<f64>())
            .sum();
        assert!((vol - 1.0).abs() < 1e-12);
        assert_eq!(p.locate(&[1.0, 1.0]), Some(35));
        assert_eq!(p.locate(&[1.1, 0.0]), None);
    }
}
