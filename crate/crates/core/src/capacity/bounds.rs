use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    covering_bound_linear_shallow, horizon_factor, horizon_factor_closed, horizon_factor_literal,
    BoundInputs, BoundReport, BoundTerm, CapacityError,
};
use crate::scalar::Scalar;

/// A stage-wise bound together with its stage-constant simplification, when
/// the inputs are stage-constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BoundPair<S> {
    pub general: BoundReport<S>,
    pub simplified: Option<BoundReport<S>>,
}

/// Builds the `(t, j)` terms `(3 mu)^{j-t} * inner(j)` with `t` as outer index.
fn double_sum<S: Scalar>(
    horizon: usize,
    mu: S,
    mut inner: impl FnMut(usize, usize) -> S,
) -> Vec<BoundTerm<S>> {
    let q = S::lit(3.0) * mu;
    let mut terms = Vec::with_capacity(horizon * (horizon + 1) / 2);
    for t in 1..=horizon {
        let mut weight = S::one();
        for j in t..=horizon {
            let v = inner(t, j);
            terms.push(BoundTerm { t, j, weight, inner: v, contribution: weight * v });
            weight = weight * q;
        }
    }
    terms
}

fn horizon_details<S: Scalar>(horizon: usize, mu: S) -> BTreeMap<String, f64> {
    let mut details = BTreeMap::new();
    details.insert("horizon_factor".into(), horizon_factor(horizon, mu).as_f64());
    if let Some(v) = horizon_factor_closed(horizon, mu) {
        details.insert("horizon_factor_closed_form".into(), v.as_f64());
    }
    if let Some(v) = horizon_factor_literal(horizon, mu) {
        details.insert("horizon_factor_printed_form".into(), v.as_f64());
    }
    details
}

fn m_scalar<S: Scalar>(m: u64) -> S {
    S::lit(m as f64)
}

/// Oracle inequality right-hand side
/// `C sum_t sum_{j>=t} (3mu)^{j-t} (approx_j + beta_j + 1/m + exp(-C' beta_j m)(N_j + N_{j+1})/m)^{1/2}`.
///
/// `log_covering[j-1]` is `log N_1(C' beta_j, Q_j)`. Passing `T` values leaves
/// stage `T+1` (the zero function, a single element) at `log 1 = 0`; passing
/// `T+1` values uses the last one for it.
pub fn oracle_bound<S: Scalar>(
    inputs: &BoundInputs<S>,
    log_covering: &[S],
) -> Result<BoundReport<S>, CapacityError> {
    inputs.validate()?;
    let horizon = inputs.horizon;
    let mut logs = log_covering.to_vec();
    if logs.len() == horizon {
        logs.push(S::zero());
    }
    if logs.len() != horizon + 1 {
        return Err(CapacityError::InvalidInputs(format!(
            "{} covering values for horizon {horizon}",
            log_covering.len()
        )));
    }
    let m = m_scalar::<S>(inputs.m);
    let cp = inputs.constants.c_prime;
    let terms = double_sum(horizon, inputs.mu, |_, j| {
        let st = &inputs.stages[j - 1];
        let decay = -(cp * st.beta * m);
        let tail = ((logs[j - 1] + decay).exp() + (logs[j] + decay).exp()) / m;
        (st.approx_error + st.beta + S::one() / m + tail).sqrt()
    });
    Ok(BoundReport::assemble(
        "oracle",
        inputs.constants.c,
        terms,
        inputs.constants.slots(&["C", "C'"]),
        BTreeMap::new(),
    ))
}

/// `beta = 2 C_1 max{k_t, k_{t+1}} log(2 C' U m) / (C' m)`.
pub fn rate_beta<S: Scalar>(k_t: usize, k_next: usize, c1: S, c_prime: S, u: S, m: u64) -> S {
    let m = m_scalar::<S>(m);
    let k = S::from_usize_lossy(k_t.max(k_next));
    S::lit(2.0) * c1 * k * (S::lit(2.0) * c_prime * u * m).ln() / (c_prime * m)
}

fn k_next<S: Scalar>(inputs: &BoundInputs<S>, j: usize) -> usize {
    inputs.stages.get(j).map_or(0, |s| s.k)
}

/// [`oracle_bound`] with `beta_j` from [`rate_beta`] and covering values
/// from the linear/shallow bound at `M = 2U`, `eps = C' beta_j`.
pub fn oracle_bound_rate_beta<S: Scalar>(
    inputs: &BoundInputs<S>,
) -> Result<BoundReport<S>, CapacityError> {
    inputs.validate()?;
    let c = &inputs.constants;
    let clamp = S::lit(2.0) * inputs.u;
    let mut adjusted = inputs.clone();
    let mut logs = Vec::with_capacity(inputs.horizon + 1);
    for j in 1..=inputs.horizon {
        let beta = rate_beta(inputs.stages[j - 1].k, k_next(inputs, j), c.c1, c.c_prime, inputs.u, inputs.m);
        adjusted.stages[j - 1].beta = beta;
        let eps = c.c_prime * beta;
        // At or beyond the clamp a single function covers the class.
        let log_n = if eps < clamp {
            covering_bound_linear_shallow(inputs.stages[j - 1].k, clamp, eps, c.c1)?
        } else {
            S::zero()
        };
        logs.push(log_n);
    }
    logs.push(S::zero());
    let mut report = oracle_bound(&adjusted, &logs)?;
    report.name = "oracle_rate_beta".into();
    report.constants = c.slots(&["C", "C'", "C_1"]);
    for (j, st) in adjusted.stages.iter().enumerate() {
        report.details.insert(format!("beta_{}", j + 1), st.beta.as_f64());
    }
    Ok(report)
}

/// `C'' sum_t sum_{j>=t} (3mu)^{j-t} (approx_j + max{k_j, k_{j+1}} log(2m)/m)^{1/2}`
/// with `k_{T+1} = 0`.
pub fn param_count_bound<S: Scalar>(inputs: &BoundInputs<S>) -> Result<BoundReport<S>, CapacityError> {
    inputs.validate()?;
    let m = m_scalar::<S>(inputs.m);
    let log2m = (S::lit(2.0) * m).ln();
    let terms = double_sum(inputs.horizon, inputs.mu, |_, j| {
        let st = &inputs.stages[j - 1];
        let k = S::from_usize_lossy(st.k.max(k_next(inputs, j)));
        (st.approx_error + k * log2m / m).sqrt()
    });
    Ok(BoundReport::assemble(
        "param_count",
        inputs.constants.c_dprime,
        terms,
        inputs.constants.slots(&["C''"]),
        BTreeMap::new(),
    ))
}

/// `d̃_j` for `j` in `1..=T+1`, with `d̃_{T+1} = d̃_T`.
fn d_tilde<S: Scalar>(inputs: &BoundInputs<S>, j: usize) -> usize {
    inputs.stages[(j - 1).min(inputs.horizon - 1)].d_tilde
}

fn stage_constant<S: Scalar>(inputs: &BoundInputs<S>) -> bool {
    let first = &inputs.stages[0];
    inputs.stages.iter().all(|s| {
        s.d_tilde == first.d_tilde && s.n_cells == first.n_cells && s.s == first.s && s.r == first.r
    })
}

/// Piecewise-constant learning bound
/// `Ĉ1 J (log m / m)^{1/2} sum_t sum_{j>=t} (3mu)^{j-t} N_t^{max{d̃_j, d̃_{j+1}}/2} (log N_j)^{1/2}`,
/// with `log N_j` read as `log 2` when `N_j < 2`.
///
/// When `N` and `d̃` are stage-constant the simplified form
/// `Ĉ1 J (N^D log N log m / m)^{1/2} H(T, mu)` is returned as well, where `H`
/// is the direct double sum; the closed and printed forms of `H` are echoed in
/// its details.
pub fn generalization_bound_constant<S: Scalar>(
    inputs: &BoundInputs<S>,
) -> Result<BoundPair<S>, CapacityError> {
    inputs.validate()?;
    let m = m_scalar::<S>(inputs.m);
    let c = &inputs.constants;
    let guarded_log = |n: usize| S::from_usize_lossy(n.max(2)).ln();
    let prefactor = c.c_hat1 * inputs.distortion * (m.ln() / m).sqrt();
    let terms = double_sum(inputs.horizon, inputs.mu, |t, j| {
        let n_t = S::from_usize_lossy(inputs.stages[t - 1].n_cells);
        let dmax = d_tilde(inputs, j).max(d_tilde(inputs, j + 1));
        let n_j = inputs.stages[j - 1].n_cells;
        n_t.powf(S::from_usize_lossy(dmax) / S::lit(2.0)) * guarded_log(n_j).sqrt()
    });
    let general =
        BoundReport::assemble("piecewise_constant", prefactor, terms, c.slots(&["C_hat1"]), BTreeMap::new());

    let simplified = stage_constant(inputs).then(|| {
        let st = &inputs.stages[0];
        let n = S::from_usize_lossy(st.n_cells);
        let dim = S::from_usize_lossy(st.d_tilde);
        let h = horizon_factor(inputs.horizon, inputs.mu);
        let pre = c.c_hat1 * inputs.distortion * (n.powf(dim) * guarded_log(st.n_cells) * m.ln() / m).sqrt();
        let term = BoundTerm { t: 0, j: 0, weight: h, inner: S::one(), contribution: h };
        BoundReport::assemble(
            "piecewise_constant_markov",
            pre,
            vec![term],
            c.slots(&["C_hat1"]),
            horizon_details(inputs.horizon, inputs.mu),
        )
    });
    Ok(BoundPair { general, simplified })
}

/// Parameter counts `n_t = (m s_t^2 / N_t^{max{d̃_{t+1}, d̃_t} + 2 d̃_t / p})^{d̃_t/(2r_t + d̃_t)}`.
pub fn smooth_param_selection<S: Scalar>(inputs: &BoundInputs<S>) -> Vec<S> {
    let m = m_scalar::<S>(inputs.m);
    (1..=inputs.horizon)
        .map(|t| {
            let st = &inputs.stages[t - 1];
            let d = S::from_usize_lossy(st.d_tilde);
            let dmax = S::from_usize_lossy(d_tilde(inputs, t).max(d_tilde(inputs, t + 1)));
            let s = S::from_usize_lossy(st.s);
            let n_cells = S::from_usize_lossy(st.n_cells);
            let base = m * s * s / n_cells.powf(dmax + S::lit(2.0) * d / inputs.p);
            base.powf(d / (S::lit(2.0) * st.r + d))
        })
        .collect()
}

/// Piecewise-smooth learning bound
/// `Ĉ2 J sum_t sum_{j>=t} (3mu)^{j-t} m^{-r/(2r+d̃_j)} s_j^{d̃_j/(2r+d̃_j)}
///  N_j^{(p r max{d̃_j,d̃_{j+1}} - d̃_j^2)/((2r+d̃_j)p)} max{d̃_j,d̃_{j+1}}^{3/2} log(m N_j)`.
///
/// The stage-constant simplification
/// `Ĉ3 m^{-r/(2r+D)} log(mN) s^{D/(2r+D)} N^{(2r-D)D/(4r+2D)} H(T, mu)` is
/// returned alongside, with `n = (m s^2 / N^{2D})^{D/(2r+D)}` in its details.
pub fn generalization_bound_smooth<S: Scalar>(
    inputs: &BoundInputs<S>,
) -> Result<BoundPair<S>, CapacityError> {
    inputs.validate()?;
    let m = m_scalar::<S>(inputs.m);
    let c = &inputs.constants;
    let p = inputs.p;
    let two = S::lit(2.0);
    let terms = double_sum(inputs.horizon, inputs.mu, |_, j| {
        let st = &inputs.stages[j - 1];
        let d = S::from_usize_lossy(st.d_tilde);
        let dmax = S::from_usize_lossy(d_tilde(inputs, j).max(d_tilde(inputs, j + 1)));
        let denom = two * st.r + d;
        let n_j = S::from_usize_lossy(st.n_cells);
        m.powf(-st.r / denom)
            * S::from_usize_lossy(st.s).powf(d / denom)
            * n_j.powf((p * st.r * dmax - d * d) / (denom * p))
            * dmax.powf(S::lit(1.5))
            * (m * n_j).ln()
    });
    let mut details = BTreeMap::new();
    for (t, n) in smooth_param_selection(inputs).into_iter().enumerate() {
        details.insert(format!("n_{}", t + 1), n.as_f64());
    }
    let general = BoundReport::assemble(
        "piecewise_smooth",
        c.c_hat2 * inputs.distortion,
        terms,
        c.slots(&["C_hat2"]),
        details,
    );

    let simplified = stage_constant(inputs).then(|| {
        let st = &inputs.stages[0];
        let dim = S::from_usize_lossy(st.d_tilde);
        let r = st.r;
        let n = S::from_usize_lossy(st.n_cells);
        let s = S::from_usize_lossy(st.s);
        let denom = two * r + dim;
        let pre = c.c_hat3
            * m.powf(-r / denom)
            * (m * n).ln()
            * s.powf(dim / denom)
            * n.powf((two * r - dim) * dim / (two * denom));
        let h = horizon_factor(inputs.horizon, inputs.mu);
        let term = BoundTerm { t: 0, j: 0, weight: h, inner: S::one(), contribution: h };
        let mut details = horizon_details(inputs.horizon, inputs.mu);
        let n_sel = (m * s * s / n.powf(two * dim)).powf(dim / denom);
        details.insert("n".into(), n_sel.as_f64());
        details.insert("p".into(), p.as_f64());
        BoundReport::assemble("piecewise_smooth_markov", pre, vec![term], c.slots(&["C_hat3"]), details)
    });
    Ok(BoundPair { general, simplified })
}

/// Smallest `m >= 3` with `bound(m) <= target`, for `bound` nonincreasing in `m`.
/// Doubling search followed by integer bisection; fails past `limit`.
pub fn min_samples_for<S: Scalar, F: Fn(u64) -> S>(
    bound: F,
    target: S,
    limit: u64,
) -> Result<u64, CapacityError> {
    let unreachable = || CapacityError::Unreachable { target: target.as_f64(), limit };
    let mut lo = 2u64;
    let mut hi = 3u64;
    while bound(hi) > target {
        lo = hi;
        hi = hi.checked_mul(2).filter(|&h| h <= limit).ok_or_else(unreachable)?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if bound(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::super::StageInputs;
    use super::*;

    fn stage(n_cells: usize, d_tilde: usize) -> StageInputs<f64> {
        StageInputs { n_cells, d_tilde, ..Default::default() }
    }

    #[test]
    fn oracle_vanishes_with_data() {
        let mut inputs = BoundInputs::uniform(1_000_000_000_000, 1, 1.0, stage(4, 2));
        inputs.stages[0].beta = 0.0;
        let r = oracle_bound(&inputs, &[3.0]).unwrap();
        assert!(r.value < 1e-5, "{}", r.value);
    }

    #[test]
    fn oracle_two_stage_expansion() {
        let mu = 2.0;
        let v = 0.04;
        let mut inputs = BoundInputs::uniform(1_000_000_000_000, 2, mu, stage(4, 2));
        for s in &mut inputs.stages {
            s.approx_error = v;
        }
        let r = oracle_bound(&inputs, &[0.0, 0.0]).unwrap();
        let expected = (2.0 + 3.0 * mu) * v.sqrt();
        assert!((r.value - expected).abs() < 1e-9, "{} vs {expected}", r.value);
        assert_eq!(r.terms.len(), 3);
        assert_eq!(r.terms[1].weight, 3.0 * mu);
        assert!(oracle_bound(&inputs, &[0.0]).is_err());
    }

    #[test]
    fn rate_beta_matches_its_shape() {
        for m in [10u64, 100, 1000, 100_000] {
            let mut inputs = BoundInputs::uniform(m, 3, 1.0, stage(4, 2));
            for (i, s) in inputs.stages.iter_mut().enumerate() {
                s.k = 2 + i;
                s.approx_error = 0.01;
            }
            let full = oracle_bound_rate_beta(&inputs).unwrap();
            let shape = param_count_bound(&inputs).unwrap();
            let ratio = full.value / shape.value;
            assert!((1.0..2.5).contains(&ratio), "m={m}: ratio {ratio}");
            let beta1 = 2.0 * 3.0 * (2.0 * m as f64).ln() / m as f64;
            assert!((full.details["beta_1"] - beta1).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_bound_single_stage_collapse() {
        let mut inputs = BoundInputs::uniform(500, 1, 1.0, stage(8, 3));
        inputs.distortion = 1.5;
        let pair = generalization_bound_constant(&inputs).unwrap();
        let cor = pair.simplified.unwrap();
        let m = 500f64;
        let expected = 1.5 * (8f64.powi(3) * 8f64.ln() * m.ln() / m).sqrt();
        assert!((cor.value - expected).abs() < 1e-12 * expected);
        assert!((pair.general.value - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn constant_bound_stage_constant_agrees() {
        let inputs = BoundInputs::uniform(2000, 4, 2.0, stage(5, 2));
        let pair = generalization_bound_constant(&inputs).unwrap();
        let cor = pair.simplified.unwrap();
        assert!((cor.value - pair.general.value).abs() < 1e-10 * cor.value);
        assert!(cor.details.contains_key("horizon_factor_printed_form"));
    }

    #[test]
    fn constant_bound_m_scaling_and_guard() {
        let a = generalization_bound_constant(&BoundInputs::uniform(100, 2, 1.0, stage(1, 2))).unwrap();
        let b = generalization_bound_constant(&BoundInputs::uniform(400, 2, 1.0, stage(1, 2))).unwrap();
        let expected = ((4.0 * 100f64).ln() / (4.0 * 100f64.ln())).sqrt();
        assert!((b.general.value / a.general.value - expected).abs() < 1e-12);
        assert!(expected < 1.0);
        // N = 1 uses log 2
        assert!(a.general.terms[0].inner == 2f64.ln().sqrt());
    }

    #[test]
    fn smooth_example_rate() {
        // d̃ = 2, r = 1, s = 1, N = 1: m^{-1/4} log m times H
        let inputs = BoundInputs::uniform(10_000, 2, 1.0, stage(1, 2));
        let cor = generalization_bound_smooth(&inputs).unwrap().simplified.unwrap();
        let m = 10_000f64;
        let expected = m.powf(-0.25) * m.ln() * horizon_factor(2, 1.0);
        assert!((cor.value - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn smooth_sparsity_power_law() {
        let mut a = BoundInputs::uniform(5000, 2, 1.0, stage(3, 2));
        for s in &mut a.stages {
            s.r = 1.5;
        }
        let mut b = a.clone();
        for s in &mut b.stages {
            s.s = 2;
        }
        let ga = generalization_bound_smooth(&a).unwrap();
        let gb = generalization_bound_smooth(&b).unwrap();
        let factor = 2f64.powf(2.0 / (3.0 + 2.0));
        assert!((gb.general.value / ga.general.value - factor).abs() < 1e-12);
        let (ca, cb) = (ga.simplified.unwrap(), gb.simplified.unwrap());
        assert!((cb.value / ca.value - factor).abs() < 1e-12);
    }

    #[test]
    fn smooth_exponent_tends_to_half() {
        let exponent = |r: f64| {
            let mut lo = BoundInputs::uniform(1_000_000, 1, 1.0, stage(1, 2));
            lo.stages[0].r = r;
            let mut hi = lo.clone();
            hi.m = 4_000_000;
            let a = generalization_bound_smooth(&lo).unwrap().simplified.unwrap().value;
            let b = generalization_bound_smooth(&hi).unwrap().simplified.unwrap().value;
            // strip log(mN) before taking the slope
            let (a, b) = (a / (1e6f64).ln(), b / (4e6f64).ln());
            (b / a).ln() / 4f64.ln()
        };
        assert!((exponent(1e6) + 0.5).abs() < 1e-5);
        assert!(exponent(1.0) > -0.3);
    }

    #[test]
    fn smooth_param_selection_echoed() {
        let inputs = BoundInputs::uniform(10_000, 1, 1.0, stage(2, 2));
        let pair = generalization_bound_smooth(&inputs).unwrap();
        // p = 2: (m / 2^{2+2})^{2/4}
        let expected = (10_000f64 / 16.0).sqrt();
        assert!((pair.general.details["n_1"] - expected).abs() < 1e-9);
        // simplified form: (m / 2^4)^{1/2}
        assert!((pair.simplified.unwrap().details["n"] - expected).abs() < 1e-9);
    }

    #[test]
    fn bisection_finds_threshold() {
        let inputs = BoundInputs::uniform(3, 1, 1.0, stage(4, 2));
        let f = |m: u64| {
            let mut i = inputs.clone();
            i.m = m;
            generalization_bound_constant(&i).unwrap().general.value
        };
        let m = min_samples_for(f, 0.1, 1 << 40).unwrap();
        assert!(f(m) <= 0.1 && f(m - 1) > 0.1);
        assert_eq!(min_samples_for(f, 0.1, 1 << 40).unwrap(), m);
        assert!(matches!(min_samples_for(f, 1e-9, 1000), Err(CapacityError::Unreachable { .. })));
        assert_eq!(min_samples_for(|_| 0.0, 1.0, 10).unwrap(), 3);
    }

    #[test]
    fn reports_round_trip_and_csv() {
        let inputs = BoundInputs::uniform(100, 2, 1.0, stage(4, 2));
        let r = param_count_bound(&inputs).unwrap();
        assert_eq!(BoundReport::from_json(&r.to_json()).unwrap(), r);
        assert!(r.constants.iter().all(|c| c.value == 1.0 && c.note.contains("relative")));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 + 1);
        assert_eq!(param_count_bound(&inputs).unwrap(), r);
    }
}
