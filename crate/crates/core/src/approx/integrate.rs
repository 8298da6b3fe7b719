use rayon::prelude::*;

use super::ApproxError;
use crate::scalar::Scalar;

/// Midpoint-rule estimate of `(int_{[0,1]^d} |f - g|^p)^{1/p}` on a
/// `resolution^d` grid.
///
/// Exact when `|f - g|` is constant on every grid cell. Slices along the first
/// axis are summed in parallel and reduced in slice order, so the result does
/// not depend on thread count.
pub fn lp_error<S, F, G>(
    f: F,
    g: G,
    dim: usize,
    p: f64,
    resolution: usize,
) -> Result<f64, ApproxError>
where
    S: Scalar,
    F: Fn(&[S]) -> S + Sync,
    G: Fn(&[S]) -> S + Sync,
{
    if resolution < 16 {
        return Err(ApproxError::ResolutionTooLow(resolution));
    }
    assert!(dim >= 1 && p >= 1.0, "lp_error needs d >= 1 and p >= 1");
    let h = 1.0 / resolution as f64;
    let inner = resolution.pow(dim as u32 - 1);
    let slices: Vec<f64> = (0..resolution)
        .into_par_iter()
        .map(|i0| {
            let mut x = vec![S::zero(); dim];
            x[0] = S::lit((i0 as f64 + 0.5) * h);
            let mut acc = 0.0f64;
            for flat in 0..inner {
                let mut rem = flat;
                for slot in x.iter_mut().skip(1).rev() {
                    *slot = S::lit(((rem % resolution) as f64 + 0.5) * h);
                    rem /= resolution;
                }
                let diff = (f(&x) - g(&x)).as_f64().abs();
                acc += if p == 1.0 { diff } else { diff.powf(p) };
            }
            acc
        })
        .collect();
    let total: f64 = slices.iter().sum();
    let integral = total * h.powi(dim as i32);
    Ok(integral.powf(1.0 / p))
}

/// Estimate at `resolution` and `2 * resolution`; accepted when the two agree
/// within 5% (or both are below `1e-12`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpEstimate {
    pub coarse: f64,
    pub value: f64,
    pub relative_change: f64,
    pub accepted: bool,
}

pub fn lp_error_checked<S, F, G>(
    f: F,
    g: G,
    dim: usize,
    p: f64,
    resolution: usize,
) -> Result<LpEstimate, ApproxError>
where
    S: Scalar,
    F: Fn(&[S]) -> S + Sync,
    G: Fn(&[S]) -> S + Sync,
{
    let coarse = lp_error(&f, &g, dim, p, resolution)?;
    let value = lp_error(&f, &g, dim, p, 2 * resolution)?;
    let scale = coarse.abs().max(value.abs());
    let relative_change = if scale < 1e-12 { 0.0 } else { (value - coarse).abs() / scale };
    Ok(LpEstimate { coarse, value, relative_change, accepted: relative_change < 0.05 })
}

/// Midpoint nodes `(x, weight)` on `[0, 1]`: every gap between consecutive
/// breakpoints (0 and 1 included) is split into `per_interval` equal cells.
pub fn midpoint_nodes(breaks: &[f64], per_interval: usize) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0 && *b < 1.0).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let m = per_interval.max(1);
    let mut nodes = Vec::with_capacity((cuts.len() - 1) * m);
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / m as f64;
        nodes.extend((0..m).map(|i| (w[0] + (i as f64 + 0.5) * h, h)));
    }
    nodes
}

/// Tensor-product rule for `(int |f - g|^p)^{1/p}` with per-axis nodes from
/// [`midpoint_nodes`]. Placing breakpoints at the kinks of piecewise-linear
/// integrands makes the rule exact away from kinks that are not axis-aligned.
pub fn lp_error_tensor<S, F, G>(f: F, g: G, nodes: &[Vec<(f64, f64)>], p: f64) -> f64
where
    S: Scalar,
    F: Fn(&[S]) -> S + Sync,
    G: Fn(&[S]) -> S + Sync,
{
    assert!(!nodes.is_empty() && p >= 1.0, "lp_error_tensor needs d >= 1 and p >= 1");
    let dim = nodes.len();
    let inner: usize = nodes[1..].iter().map(Vec::len).product();
    let slices: Vec<f64> = nodes[0]
        .par_iter()
        .map(|&(x0, w0)| {
            let mut x = vec![S::zero(); dim];
            x[0] = S::lit(x0);
            let mut acc = 0.0f64;
            for flat in 0..inner {
                let mut rem = flat;
                let mut w = w0;
                for k in (1..dim).rev() {
                    let (xk, wk) = nodes[k][rem % nodes[k].len()];
                    rem /= nodes[k].len();
                    x[k] = S::lit(xk);
                    w *= wk;
                }
                let diff = (f(&x) - g(&x)).as_f64().abs();
                if diff > 0.0 {
                    acc += w * if p == 1.0 { diff } else { diff.powf(p) };
                }
            }
            acc
        })
        .collect();
    slices.iter().sum::<f64>().powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_functions() {
        let f = |x: &[f64]| x[0] * x[1];
        assert_eq!(lp_error(f, f, 2, 1.0, 32).unwrap(), 0.0);
    }

    #[test]
    fn constant_difference() {
        let one = |_: &[f64]| 1.0;
        let zero = |_: &[f64]| 0.0;
        assert!((lp_error(one, zero, 2, 1.0, 64).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_box_indicator_l2() {
        let f = |x: &[f64]| if x[0] <= 0.5 { 1.0 } else { 0.0 };
        let zero = |_: &[f64]| 0.0;
        let e = lp_error(f, zero, 2, 2.0, 1000).unwrap();
        assert!((e - 0.5f64.sqrt()).abs() < 1e-9, "{e}");
    }

    #[test]
    fn rejects_coarse_grid() {
        let z = |_: &[f64]| 0.0;
        assert_eq!(lp_error(z, z, 1, 1.0, 8), Err(ApproxError::ResolutionTooLow(8)));
    }

    #[test]
    fn refinement_check() {
        let f = |x: &[f64]| x[0] * x[0];
        let zero = |_: &[f64]| 0.0;
        let est = lp_error_checked(f, zero, 1, 1.0, 64).unwrap();
        assert!(est.accepted);
        assert!((est.value - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn nodes_cover_the_unit_interval() {
        let nodes = midpoint_nodes(&[0.25, 0.5, 0.5, 1.0, -0.1], 3);
        assert_eq!(nodes.len(), 9);
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((nodes[0].0 - 0.25 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_rule_is_exact_on_aligned_ramps() {
        // ramp on [0.2, 0.3] then flat: piecewise linear with kinks on the breaks
        let f = |x: &[f64]| ((x[0] - 0.2) / 0.1).clamp(0.0, 1.0);
        let zero = |_: &[f64]| 0.0;
        let axis = midpoint_nodes(&[0.2, 0.3], 1);
        let e = lp_error_tensor(f, zero, &[axis.clone(), axis], 1.0);
        assert!((e - 0.75).abs() < 1e-12, "{e}");
    }

    #[test]
    fn f32_matches_f64() {
        let f = |x: &[f32]| if x[0] < 0.25 { 1.0f32 } else { 0.0 };
        let z = |_: &[f32]| 0.0f32;
        assert!((lp_error(f, z, 2, 1.0, 128).unwrap() - 0.25).abs() < 1e-6);
    }
}
