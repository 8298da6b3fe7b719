use serde::{Deserialize, Serialize};

use super::NetError;
use crate::scalar::Scalar;

/// Allowed connections of one weight matrix, row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    pub rows: usize,
    pub cols: usize,
    pub allowed: Vec<bool>,
}

impl LayerMask {
    pub fn dense(rows: usize, cols: usize) -> Self {
        Self { rows, cols, allowed: vec![true; rows * cols] }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, allowed: vec![false; rows * cols] }
    }

    pub fn allow(&mut self, row: usize, col: usize) {
        self.allowed[row * self.cols + col] = true;
    }

    #[inline]
    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }
}

/// Depth `L`, widths `d_0..d_L`, optional sparsity pattern and output clamp `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct NetArchitecture<S> {
    /// `d_0`.
    pub input_dim: usize,
    /// Hidden widths `d_1..d_L`.
    pub widths: Vec<usize>,
    /// One mask per weight matrix `W_1..W_L` when the net is sparsely connected.
    pub mask: Option<Vec<LayerMask>>,
    pub clamp: S,
}

impl<S: Scalar> NetArchitecture<S> {
    pub fn dense(input_dim: usize, widths: Vec<usize>, clamp: S) -> Result<Self, NetError> {
        let arch = Self { input_dim, widths, mask: None, clamp };
        arch.check()?;
        Ok(arch)
    }

    pub fn masked(
        input_dim: usize,
        widths: Vec<usize>,
        mask: Vec<LayerMask>,
        clamp: S,
    ) -> Result<Self, NetError> {
        let arch = Self { input_dim, widths, mask: Some(mask), clamp };
        arch.check()?;
        Ok(arch)
    }

    pub fn check(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidArchitecture(m.to_string()));
        if self.input_dim == 0 {
            return bad("input dimension must be positive");
        }
        if self.widths.is_empty() {
            return bad("depth must be at least 1");
        }
        if self.widths.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.clamp > S::zero()) {
            return bad("clamp must be positive");
        }
        if let Some(mask) = &self.mask {
            if mask.len() != self.depth() {
                return bad("one mask per weight matrix required");
            }
            for (k, m) in mask.iter().enumerate() {
                let (rows, cols) = self.layer_shape(k);
                if m.rows != rows || m.cols != cols || m.allowed.len() != rows * cols {
                    return bad("mask shape does not match layer");
                }
            }
        }
        Ok(())
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// `d_j` for `j = 0..=L`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim).chain(self.widths.iter().copied()).collect()
    }

    /// `(rows, cols)` of `W_{k+1}`.
    pub fn layer_shape(&self, k: usize) -> (usize, usize) {
        let cols = if k == 0 { self.input_dim } else { self.widths[k - 1] };
        (self.widths[k], cols)
    }

    /// `D_max = max_j d_j`.
    pub fn d_max(&self) -> usize {
        self.dims().into_iter().max().unwrap_or(0)
    }

    /// Dense count `n_L = sum_j (d_j d_{j+1} + d_{j+1}) + d_L`.
    pub fn dense_param_count(&self) -> usize {
        let dims = self.dims();
        let hidden: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        hidden + dims[dims.len() - 1]
    }

    /// Tunable parameters: unmasked weights, all biases and the output vector.
    pub fn param_count(&self) -> usize {
        match &self.mask {
            None => self.dense_param_count(),
            Some(mask) => {
                let weights: usize = mask.iter().map(LayerMask::count).sum();
                let biases: usize = self.widths.iter().sum();
                weights + biases + self.widths[self.depth() - 1]
            }
        }
    }

    #[inline]
    pub fn weight_allowed(&self, k: usize, row: usize, col: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[k].is_allowed(row, col))
    }
}

/// Largest uniform width `w` whose dense net of the given depth stays within
/// `budget` parameters (at least 1).
pub fn width_for_budget(input_dim: usize, depth: usize, budget: usize) -> usize {
    let count = |w: usize| {
        let first = input_dim * w + w;
        let rest = depth.saturating_sub(1) * (w * w + w);
        first + rest + w
    };
    let mut w = 1;
    while count(w + 1) <= budget {
        w += 1;
    }
    w
}
