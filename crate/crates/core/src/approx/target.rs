use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ApproxError, CubicPartition};
use crate::scalar::Scalar;

/// Function supported on `s` cubes of a partition and constant on each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PiecewiseConstantSpec<S> {
    pub partition: CubicPartition,
    /// Supported cube indices `Lambda_s`.
    pub support: Vec<usize>,
    /// `c_j` for each supported cube, aligned with `support`.
    pub values: Vec<S>,
    /// `C_0`.
    pub bound: S,
}

impl<S: Scalar> PiecewiseConstantSpec<S> {
    pub fn new(
        partition: CubicPartition,
        support: Vec<usize>,
        values: Vec<S>,
        bound: S,
    ) -> Result<Self, ApproxError> {
        let spec = Self { partition, support, values, bound };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), ApproxError> {
        let bad = |m: String| Err(ApproxError::InvalidTarget(m));
        if !(self.bound > S::zero()) {
            return bad("C0 must be positive".into());
        }
        if self.support.len() != self.values.len() {
            return bad("support and values differ in length".into());
        }
        let total = self.partition.num_cubes();
        let mut seen = vec![false; total];
        for &j in &self.support {
            if j >= total {
                return bad(format!("cube {j} outside partition of {total}"));
            }
            if std::mem::replace(&mut seen[j], true) {
                return bad(format!("cube {j} listed twice"));
            }
        }
        if self.values.iter().any(|c| !(c.abs() <= self.bound)) {
            return bad("|c_j| exceeds C0".into());
        }
        Ok(())
    }

    /// `s = |Lambda_s|`.
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn dim(&self) -> usize {
        self.partition.dim
    }

    pub fn evaluate(&self, x: &[S]) -> S {
        match self.partition.locate(x) {
            Some(j) => self
                .support
                .iter()
                .position(|&k| k == j)
                .map_or(S::zero(), |i| self.values[i]),
            None => S::zero(),
        }
    }

    /// Value on cube `j` (zero off the support).
    pub fn cube_value(&self, j: usize) -> S {
        self.support.iter().position(|&k| k == j).map_or(S::zero(), |i| self.values[i])
    }

    /// `s` distinct cubes with values `+-C0 * u`, `u` uniform in `[1/2, 1]`.
    pub fn random<R: Rng + ?Sized>(
        partition: CubicPartition,
        s: usize,
        bound: S,
        rng: &mut R,
    ) -> Result<Self, ApproxError> {
        let total = partition.num_cubes();
        if s > total {
            return Err(ApproxError::InvalidTarget(format!("s = {s} exceeds N^d = {total}")));
        }
        let mut support = sample(rng, total, s).into_vec();
        support.sort_unstable();
        let values = (0..s)
            .map(|_| {
                let mag = rng.random_range(0.5..=1.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                bound * S::lit(sign * mag)
            })
            .collect();
        Self::new(partition, support, values, bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Monomial<S> {
    pub exponents: Vec<u32>,
    pub coef: S,
}

/// Multivariate polynomial in global coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Polynomial<S> {
    pub dim: usize,
    pub terms: Vec<Monomial<S>>,
}

impl<S: Scalar> Polynomial<S> {
    pub fn constant(dim: usize, c: S) -> Self {
        Self { dim, terms: vec![Monomial { exponents: vec![0; dim], coef: c }] }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exponents.iter().sum()).max().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[S]) -> S {
        self.terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .zip(x)
                    .fold(t.coef, |acc, (&e, &xi)| acc * xi.powi(e as i32))
            })
            .sum()
    }

    /// `d^{alpha} p`.
    pub fn derivative(&self, alpha: &[u32]) -> Self {
        let terms = self
            .terms
            .iter()
            .filter_map(|t| {
                let mut coef = t.coef;
                let mut exps = t.exponents.clone();
                for (e, &a) in exps.iter_mut().zip(alpha) {
                    if a > *e {
                        return None;
                    }
                    for k in 0..a {
                        coef = coef * S::lit(f64::from(*e - k));
                    }
                    *e -= a;
                }
                Some(Monomial { exponents: exps, coef })
            })
            .collect();
        Self { dim: self.dim, terms }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.exponents.iter().all(|&e| e == 0) || t.coef == S::zero())
    }
}

/// Sum over supported cubes of a polynomial piece times the cube indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PiecewiseSmoothSpec<S> {
    pub partition: CubicPartition,
    pub support: Vec<usize>,
    pub pieces: Vec<Polynomial<S>>,
    /// Smoothness `r = u + v`, `u` integer, `0 < v <= 1`.
    pub smoothness: f64,
    /// Lipschitz constant `c_0` of the order-`u` partial derivatives.
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzCertificate {
    /// Largest observed `|D^a g(x) - D^a g(x')| / |x - x'|^v`.
    pub max_ratio: f64,
    pub holds: bool,
    pub pairs_checked: usize,
}

impl<S: Scalar> PiecewiseSmoothSpec<S> {
    pub fn new(
        partition: CubicPartition,
        support: Vec<usize>,
        pieces: Vec<Polynomial<S>>,
        smoothness: f64,
        lipschitz: f64,
    ) -> Result<Self, ApproxError> {
        if support.len() != pieces.len() {
            return Err(ApproxError::InvalidTarget("support and pieces differ in length".into()));
        }
        if !(smoothness > 0.0) || !(lipschitz > 0.0) {
            return Err(ApproxError::InvalidTarget("r and c0 must be positive".into()));
        }
        if support.iter().any(|&j| j >= partition.num_cubes())
            || pieces.iter().any(|p| p.dim != partition.dim)
        {
            return Err(ApproxError::InvalidTarget("piece outside partition".into()));
        }
        Ok(Self { partition, support, pieces, smoothness, lipschitz })
    }

    /// Lift of a piecewise-constant spec.
    pub fn from_constant(spec: &PiecewiseConstantSpec<S>, smoothness: f64) -> Self {
        let pieces = spec.values.iter().map(|&c| Polynomial::constant(spec.dim(), c)).collect();
        Self {
            partition: spec.partition,
            support: spec.support.clone(),
            pieces,
            smoothness,
            lipschitz: 1.0,
        }
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    /// `(u, v)` with `r = u + v`, `0 < v <= 1`.
    pub fn split_smoothness(&self) -> (u32, f64) {
        let u = (self.smoothness.ceil() as u32).saturating_sub(1);
        (u, self.smoothness - f64::from(u))
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces.iter().all(Polynomial::is_constant)
    }

    pub fn evaluate(&self, x: &[S]) -> S {
        match self.partition.locate(x) {
            Some(j) => self
                .support
                .iter()
                .position(|&k| k == j)
                .map_or(S::zero(), |i| self.pieces[i].evaluate(x)),
            None => S::zero(),
        }
    }

    /// Samples all order-`u` partials on a `grid^d` lattice of every supported
    /// cube and checks the Holder condition with exponent `v` pairwise.
    pub fn certify_lipschitz(&self, grid: usize) -> LipschitzCertificate {
        let (u, v) = self.split_smoothness();
        let d = self.partition.dim;
        let alphas = multi_indices(d, u);
        let grid = grid.max(2);
        let mut max_ratio = 0.0f64;
        let mut pairs = 0usize;
        for (piece, &cube) in self.pieces.iter().zip(&self.support) {
            let bounds: Vec<(S, S)> = self.partition.bounds(cube);
            let points: Vec<Vec<S>> = (0..grid.pow(d as u32))
                .map(|flat| {
                    let mut rem = flat;
                    bounds
                        .iter()
                        .map(|&(a, b)| {
                            let i = rem % grid;
                            rem /= grid;
                            a + (b - a) * S::from_usize_lossy(i) / S::from_usize_lossy(grid - 1)
                        })
                        .collect()
                })
                .collect();
            for alpha in &alphas {
                let deriv = piece.derivative(alpha);
                let vals: Vec<f64> = points.iter().map(|p| deriv.evaluate(p).as_f64()).collect();
                for i in 0..points.len() {
                    for k in (i + 1)..points.len() {
                        let dist: f64 = points[i]
                            .iter()
                            .zip(&points[k])
                            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        let ratio = (vals[i] - vals[k]).abs() / dist.powf(v);
                        max_ratio = max_ratio.max(ratio);
                        pairs += 1;
                    }
                }
            }
        }
        LipschitzCertificate {
            max_ratio,
            holds: max_ratio <= self.lipschitz * (1.0 + 1e-9),
            pairs_checked: pairs,
        }
    }
}

/// All `alpha` in `N^d` with `|alpha| = order`.
fn multi_indices(d: usize, order: u32) -> Vec<Vec<u32>> {
    if d == 1 {
        return vec![vec![order]];
    }
    (0..=order)
        .flat_map(|first| {
            multi_indices(d - 1, order - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngContract;

    #[test]
    fn constant_spec_evaluates_on_support_only() {
        let p = CubicPartition::new(2, 2);
        let spec = PiecewiseConstantSpec::new(p, vec![0, 3], vec![0.5, -1.0], 1.0).unwrap();
        assert_eq!(spec.evaluate(&[0.1, 0.1]), 0.5);
        assert_eq!(spec.evaluate(&[0.9, 0.9]), -1.0);
        assert_eq!(spec.evaluate(&[0.1, 0.9]), 0.0);
    }

    #[test]
    fn constant_spec_validation() {
        let p = CubicPartition::new(2, 2);
        assert!(PiecewiseConstantSpec::new(p, vec![4], vec![0.5], 1.0).is_err());
        assert!(PiecewiseConstantSpec::new(p, vec![1, 1], vec![0.5, 0.5], 1.0).is_err());
        assert!(PiecewiseConstantSpec::new(p, vec![1], vec![2.0], 1.0).is_err());
        let mut rng = RngContract::new(4).derive_stream("spec", 0);
        let r = PiecewiseConstantSpec::random(p, 4, 1.0f64, &mut rng).unwrap();
        assert_eq!(r.sparsity(), 4);
        assert!(PiecewiseConstantSpec::random(p, 5, 1.0f64, &mut rng).is_err());
    }

    #[test]
    fn polynomial_derivatives() {
        // p = 3 x^2 y + 2 y
        let p = Polynomial {
            dim: 2,
            terms: vec![
                Monomial { exponents: vec![2, 1], coef: 3.0 },
                Monomial { exponents: vec![0, 1], coef: 2.0 },
            ],
        };
        assert_eq!(p.evaluate(&[2.0, 1.0]), 14.0);
        let dx = p.derivative(&[1, 0]);
        assert_eq!(dx.evaluate(&[2.0, 1.0]), 12.0);
        let dxx = p.derivative(&[2, 0]);
        assert_eq!(dxx.evaluate(&[5.0, 2.0]), 12.0);
        assert_eq!(p.degree(), 3);
        assert_eq!(multi_indices(2, 2).len(), 3);
    }

    #[test]
    fn lipschitz_certificate() {
        // g = x^2 on [0, 1/2]: first derivative 2x is 2-Lipschitz, so r = 2 (u = 1, v = 1)
        let p = CubicPartition::new(1, 2);
        let g = Polynomial { dim: 1, terms: vec![Monomial { exponents: vec![2], coef: 1.0 }] };
        let ok = PiecewiseSmoothSpec::new(p, vec![0], vec![g.clone()], 2.0, 2.0).unwrap();
        let cert = ok.certify_lipschitz(9);
        assert!(cert.holds);
        assert!((cert.max_ratio - 2.0).abs() < 1e-9);
        let tight = PiecewiseSmoothSpec::new(p, vec![0], vec![g], 2.0, 1.5).unwrap();
        assert!(!tight.certify_lipschitz(9).holds);
    }
}
