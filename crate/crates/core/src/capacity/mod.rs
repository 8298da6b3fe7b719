//! Covering-number bounds and the generalization-bound evaluators for batch
//! Q-learning, as plain arithmetic over explicit inputs.
//!
//! None of the absolute constants (`C`, `C'`, `C''`, `Ĉ1`..`Ĉ3`, `C*_1`,
//! `C*_2`, `C_1`) are known, so every one is an input defaulting to 1 and
//! reports are only meaningful for relative comparisons and scalings.

mod bounds;
mod horizon;

pub use bounds::{
    rate_beta, param_count_bound, generalization_bound_constant,
    generalization_bound_smooth, min_samples_for, oracle_bound, oracle_bound_rate_beta,
    smooth_param_selection, BoundPair,
};
pub use horizon::{horizon_factor, horizon_factor_closed, horizon_factor_literal};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const UNKNOWN_CONSTANT: &str = "unknown absolute constant; relative comparisons only";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("epsilon {eps} must lie in (0, {bound})")]
    EpsilonOutOfRange { eps: f64, bound: f64 },
    #[error("D_max must be at least 2, got {0}")]
    DmaxTooSmall(usize),
    #[error("invalid bound inputs: {0}")]
    InvalidInputs(String),
    #[error("no sample size up to {limit} reaches the target {target}")]
    Unreachable { target: f64, limit: u64 },
}

/// `C_1 k log(M/eps)`: bound on `log N_1(eps, G_{k,M})` for linear models or
/// shallow nets with `k` parameters.
pub fn covering_bound_linear_shallow<S: Scalar>(
    k: usize,
    clamp: S,
    eps: S,
    c1: S,
) -> Result<S, CapacityError> {
    check_eps(clamp, eps)?;
    if k == 0 {
        return Err(CapacityError::InvalidInputs("k must be at least 1".into()));
    }
    Ok(c1 * S::from_usize_lossy(k) * (clamp / eps).ln())
}

/// `C*_1 L n log(D_max) log(M/eps)`: bound on `log N_1(eps, H_{n,L,M})`.
pub fn covering_bound_deep<S: Scalar>(
    n: usize,
    depth: usize,
    d_max: usize,
    clamp: S,
    eps: S,
    c_star1: S,
) -> Result<S, CapacityError> {
    check_eps(clamp, eps)?;
    if d_max < 2 {
        return Err(CapacityError::DmaxTooSmall(d_max));
    }
    if n == 0 || depth == 0 {
        return Err(CapacityError::InvalidInputs("n and L must be positive".into()));
    }
    let ln_d = S::from_usize_lossy(d_max).ln();
    Ok(c_star1 * S::from_usize_lossy(depth) * S::from_usize_lossy(n) * ln_d * (clamp / eps).ln())
}

fn check_eps<S: Scalar>(clamp: S, eps: S) -> Result<(), CapacityError> {
    if !(eps > S::zero() && eps < clamp) {
        return Err(CapacityError::EpsilonOutOfRange { eps: eps.as_f64(), bound: clamp.as_f64() });
    }
    Ok(())
}

/// Unknown absolute constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default)]
pub struct BoundConstants<S> {
    pub c: S,
    pub c_prime: S,
    pub c_dprime: S,
    pub c_hat1: S,
    pub c_hat2: S,
    pub c_hat3: S,
    pub c_star1: S,
    pub c_star2: S,
    pub c1: S,
}

impl<S: Scalar> Default for BoundConstants<S> {
    fn default() -> Self {
        let one = S::one();
        Self {
            c: one,
            c_prime: one,
            c_dprime: one,
            c_hat1: one,
            c_hat2: one,
            c_hat3: one,
            c_star1: one,
            c_star2: one,
            c1: one,
        }
    }
}

impl<S: Scalar> BoundConstants<S> {
    fn named(&self) -> [(&'static str, S); 9] {
        [
            ("C", self.c),
            ("C'", self.c_prime),
            ("C''", self.c_dprime),
            ("C_hat1", self.c_hat1),
            ("C_hat2", self.c_hat2),
            ("C_hat3", self.c_hat3),
            ("C_star1", self.c_star1),
            ("C_star2", self.c_star2),
            ("C_1", self.c1),
        ]
    }

    fn slots(&self, names: &[&str]) -> Vec<ConstantSlot> {
        self.named()
            .into_iter()
            .filter(|(n, _)| names.contains(n))
            .map(|(n, v)| ConstantSlot {
                name: n.to_string(),
                value: v.as_f64(),
                note: UNKNOWN_CONSTANT.to_string(),
            })
            .collect()
    }
}

/// Per-stage quantities for stage `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default)]
pub struct StageInputs<S> {
    /// Sparsity `s_t`.
    pub s: usize,
    /// Partition resolution `N_t`.
    pub n_cells: usize,
    /// Input dimension `d̃_t = d_{s,t} + d_{a,t}` (history counted if used).
    pub d_tilde: usize,
    /// Smoothness `r_t`.
    pub r: S,
    /// Net parameter count `n_t`.
    pub n: usize,
    pub layers: usize,
    pub d_max: usize,
    /// Parameter count `k_t` of a linear or shallow class.
    pub k: usize,
    pub beta: S,
    /// `min_h E[(h - Q*_t)^2]`.
    pub approx_error: S,
}

impl<S: Scalar> Default for StageInputs<S> {
    fn default() -> Self {
        Self {
            s: 1,
            n_cells: 2,
            d_tilde: 2,
            r: S::one(),
            n: 1,
            layers: 1,
            d_max: 2,
            k: 1,
            beta: S::zero(),
            approx_error: S::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BoundInputs<S> {
    pub m: u64,
    pub horizon: usize,
    pub mu: S,
    /// Reward bound `U`.
    pub u: S,
    pub p: S,
    /// Distortion `J_{p,T}`.
    pub distortion: S,
    /// Stages `1..=T`; stage `T+1` is the zero function.
    pub stages: Vec<StageInputs<S>>,
    #[serde(default)]
    pub constants: BoundConstants<S>,
}

impl<S: Scalar> BoundInputs<S> {
    /// `T` identical stages.
    pub fn uniform(m: u64, horizon: usize, mu: S, stage: StageInputs<S>) -> Self {
        Self {
            m,
            horizon,
            mu,
            u: S::one(),
            p: S::lit(2.0),
            distortion: S::one(),
            stages: vec![stage; horizon],
            constants: BoundConstants::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CapacityError> {
        let bad = |m: String| Err(CapacityError::InvalidInputs(m));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.stages.len() != self.horizon {
            return bad(format!("{} stage records for horizon {}", self.stages.len(), self.horizon));
        }
        if !(self.mu >= S::one()) {
            return bad(format!("mu = {} must be at least 1", self.mu));
        }
        if !(self.u > S::zero() && self.p >= S::one() && self.distortion > S::zero()) {
            return bad("U and J must be positive, p at least 1".into());
        }
        if let Some((name, v)) = self.constants.named().into_iter().find(|(_, v)| !(*v > S::zero())) {
            return bad(format!("constant {name} = {v} must be positive"));
        }
        for (i, st) in self.stages.iter().enumerate() {
            let t = i + 1;
            if st.s == 0 || st.n_cells == 0 || st.d_tilde == 0 || st.n == 0 || st.layers == 0 {
                return bad(format!("stage {t}: counts must be positive"));
            }
            if st.k == 0 {
                return bad(format!("stage {t}: k must be positive"));
            }
            if !(st.beta >= S::zero() && st.approx_error >= S::zero() && st.r > S::zero()) {
                return bad(format!("stage {t}: beta and approximation error must be nonnegative, r positive"));
            }
        }
        Ok(())
    }
}

/// Constant slot echoed in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSlot {
    pub name: String,
    pub value: f64,
    pub note: String,
}

/// `(t, j)` summand: `weight * inner`, with `weight = (3 mu)^{j-t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BoundTerm<S> {
    pub t: usize,
    pub j: usize,
    pub weight: S,
    pub inner: S,
    pub contribution: S,
}

/// `value = prefactor * sum(contribution)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BoundReport<S> {
    pub name: String,
    pub value: S,
    pub prefactor: S,
    pub terms: Vec<BoundTerm<S>>,
    pub constants: Vec<ConstantSlot>,
    /// Auxiliary quantities (parameter selections, alternative forms).
    pub details: BTreeMap<String, f64>,
}

impl<S: Scalar> BoundReport<S> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// One row per `(t, j)` term, then one `total` row.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bound", "t", "j", "weight", "inner", "contribution"])?;
        for term in &self.terms {
            w.write_record([
                self.name.clone(),
                term.t.to_string(),
                term.j.to_string(),
                term.weight.to_string(),
                term.inner.to_string(),
                term.contribution.to_string(),
            ])?;
        }
        w.write_record([
            self.name.clone(),
            String::new(),
            String::new(),
            String::new(),
            self.prefactor.to_string(),
            self.value.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    fn assemble(
        name: &str,
        prefactor: S,
        terms: Vec<BoundTerm<S>>,
        constants: Vec<ConstantSlot>,
        details: BTreeMap<String, f64>,
    ) -> Self {
        let sum = terms.iter().fold(S::zero(), |acc, t| acc + t.contribution);
        Self { name: name.to_string(), value: prefactor * sum, prefactor, terms, constants, details }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_covering_examples() {
        let v = covering_bound_linear_shallow(10, 2.0, 0.2, 1.0).unwrap();
        assert!((v - 10.0 * 10f64.ln()).abs() < 1e-12);
        assert!((v - 23.025850929940457).abs() < 1e-12);
        let eps = 0.3;
        let one = covering_bound_linear_shallow(1, std::f64::consts::E * eps, eps, 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-15);
        let k20 = covering_bound_linear_shallow(20, 2.0, 0.2, 1.0).unwrap();
        assert_eq!(k20, 2.0 * v);
    }

    #[test]
    fn deep_covering_examples() {
        let v = covering_bound_deep(100, 2, 50, 2.0, 0.2, 1.0).unwrap();
        let oracle = 200.0 * 50f64.ln() * 10f64.ln();
        assert_eq!(v, oracle);
        assert!((v - 1801.5531711497229).abs() < 1e-9, "{v}");
        let l1 = covering_bound_deep(100, 1, 50, 2.0, 0.2, 1.0).unwrap();
        assert_eq!(v / l1, 2.0);
        let finer = covering_bound_deep(100, 2, 50, 2.0, 0.1, 1.0).unwrap();
        assert!(finer > v);
    }

    #[test]
    fn covering_rejects_bad_epsilon() {
        assert!(matches!(
            covering_bound_linear_shallow(3, 1.0, 1.0, 1.0),
            Err(CapacityError::EpsilonOutOfRange { .. })
        ));
        assert!(covering_bound_linear_shallow(3, 1.0, 0.0, 1.0).is_err());
        assert!(covering_bound_deep(3, 1, 5, 1.0, 2.0, 1.0).is_err());
        assert_eq!(covering_bound_deep(3, 1, 1, 1.0, 0.5, 1.0), Err(CapacityError::DmaxTooSmall(1)));
    }

    #[test]
    fn f32_covering() {
        let v = covering_bound_linear_shallow(10, 2.0f32, 0.2, 1.0).unwrap();
        assert!((v - 23.02585).abs() < 1e-4);
    }

    #[test]
    fn validation() {
        let ok = BoundInputs::uniform(100, 3, 2.0, StageInputs::default());
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.mu = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.stages.pop();
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.constants.c_prime = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.stages[1].beta = -1.0;
        assert!(bad.validate().is_err());
    }
}
