use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    approximate_piecewise_constant, embed_in_depth, lp_error, ApproxError, PiecewiseConstantSpec,
    PiecewiseSmoothSpec,
};
use crate::nets::{train, width_for_budget, NetArchitecture, ReluNet, TrainerConfig};
use crate::rng::RngContract;
use crate::scalar::Scalar;

/// Layer count `2(d+u)ceil((r+2d)/(2d)) + 8(d+u) + 3 + ceil((rp+d+p+1)/(2d))`.
pub fn layer_count(d: usize, u: u32, r: f64, p: f64) -> usize {
    let d_f = d as f64;
    let du = d + u as usize;
    let first = ((r + 2.0 * d_f) / (2.0 * d_f)).ceil() as usize;
    let last = ((r * p + d_f + p + 1.0) / (2.0 * d_f)).ceil() as usize;
    2 * du * first + 8 * du + 3 + last
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateStudyConfig {
    /// Parameter budgets `n`; each net gets `n N^d` parameters.
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub p: f64,
    /// Replaces the closed-form layer count when set.
    pub depth_override: Option<usize>,
    /// Training sample count per fit.
    pub samples: usize,
    pub eval_resolution: usize,
    pub trainer: TrainerConfig,
    /// Ramp width used when the target is piecewise constant and the budget
    /// admits the explicit construction.
    pub tau: f64,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        Self {
            budgets: vec![2, 4, 8, 16],
            seeds: vec![0, 1, 2],
            p: 1.0,
            depth_override: None,
            samples: 2000,
            eval_resolution: 128,
            trainer: TrainerConfig::default(),
            tau: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateMethod {
    Trained,
    Constructive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub budget: usize,
    pub depth: usize,
    pub width: usize,
    pub params: usize,
    pub measured_error: f64,
    pub predicted_bound: f64,
    pub seed: u64,
    pub method: RateMethod,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log(median error)` against `log(n)`.
    pub fitted_slope: Option<f64>,
    /// `-r/d`.
    pub predicted_slope: f64,
}

impl RateReport {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["budget", "depth", "measured_error", "predicted_bound", "seed"])?;
        for r in &self.rows {
            w.write_record([
                r.budget.to_string(),
                r.depth.to_string(),
                r.measured_error.to_string(),
                r.predicted_bound.to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn as_constant<S: Scalar>(spec: &PiecewiseSmoothSpec<S>) -> Option<PiecewiseConstantSpec<S>> {
    if !spec.is_piecewise_constant() {
        return None;
    }
    let values: Vec<S> = spec
        .pieces
        .iter()
        .zip(&spec.support)
        .map(|(p, &j)| p.evaluate(&spec.partition.center::<S>(j)))
        .collect();
    let bound = values.iter().fold(S::zero(), |m, v| m.max(v.abs())).max(S::lit(1e-12));
    PiecewiseConstantSpec::new(spec.partition, spec.support.clone(), values, bound).ok()
}

/// Fits nets of growing parameter budget to `spec` and reports measured `L^p`
/// errors next to the `n^{-r/d} s N^{-d/p}` rate (unit constant). Asserts nothing.
pub fn empirical_rate_study<S: Scalar>(
    spec: &PiecewiseSmoothSpec<S>,
    cfg: &RateStudyConfig,
) -> Result<RateReport, ApproxError> {
    let mut distinct = cfg.budgets.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(ApproxError::TooFewBudgets(distinct.len()));
    }
    let d = spec.partition.dim;
    let n_cubes = spec.partition.num_cubes();
    let s = spec.sparsity();
    let r = spec.smoothness;
    let (u, _) = spec.split_smoothness();
    let depth = cfg.depth_override.unwrap_or_else(|| layer_count(d, u, r, cfg.p));
    let constructive = match as_constant(spec) {
        Some(c) if cfg.tau < 0.5 / spec.partition.resolution as f64 => {
            let net = approximate_piecewise_constant(&c, S::lit(cfg.tau))?;
            Some(embed_in_depth(&net, depth.max(2))?)
        }
        _ => None,
    };

    let mut rows = Vec::new();
    for (bi, &budget) in cfg.budgets.iter().enumerate() {
        let params = budget * n_cubes;
        let width = width_for_budget(d, depth, params);
        let predicted = (budget as f64).powf(-r / d as f64)
            * s as f64
            * (spec.partition.resolution as f64).powf(-(d as f64) / cfg.p);
        for &seed in &cfg.seeds {
            let explicit = constructive.as_ref().filter(|n| n.param_count() <= params);
            let fitted = match explicit {
                Some(net) => Ok((net.clone(), RateMethod::Constructive)),
                None => fit_by_training(spec, cfg, depth, width, seed, bi)
                    .map(|n| (n, RateMethod::Trained)),
            };
            let row = match fitted {
                Ok((net, method)) => {
                    let err = lp_error(
                        |x: &[S]| spec.evaluate(x),
                        |x: &[S]| net.forward(x).unwrap_or_else(|_| S::nan()),
                        d,
                        cfg.p,
                        cfg.eval_resolution,
                    )?;
                    RateRow {
                        budget,
                        depth: net.arch.depth(),
                        width,
                        params: net.param_count(),
                        measured_error: err,
                        predicted_bound: predicted,
                        seed,
                        method,
                        failed: !err.is_finite(),
                    }
                }
                Err(_) => RateRow {
                    budget,
                    depth,
                    width,
                    params,
                    measured_error: f64::NAN,
                    predicted_bound: predicted,
                    seed,
                    method: RateMethod::Trained,
                    failed: true,
                },
            };
            rows.push(row);
        }
    }
    let fitted_slope = fit_slope(&rows);
    Ok(RateReport { rows, fitted_slope, predicted_slope: -r / d as f64 })
}

fn fit_by_training<S: Scalar>(
    spec: &PiecewiseSmoothSpec<S>,
    cfg: &RateStudyConfig,
    depth: usize,
    width: usize,
    seed: u64,
    budget_index: usize,
) -> Result<ReluNet<S>, ApproxError> {
    let d = spec.partition.dim;
    let contract = RngContract::new(seed).derive_contract("rate-study", budget_index as u64);
    let mut stream = contract.derive_stream("samples", 0);
    let data: Vec<(Vec<S>, S)> = (0..cfg.samples.max(1))
        .map(|_| {
            let x: Vec<S> = (0..d).map(|_| S::lit(stream.random::<f64>())).collect();
            let y = spec.evaluate(&x);
            (x, y)
        })
        .collect();
    let peak = data.iter().fold(S::one(), |m, (_, y)| m.max(y.abs()));
    let arch = NetArchitecture::dense(d, vec![width; depth], peak * S::lit(1.5))?;
    let init = ReluNet::init_glorot(arch, &mut contract.derive_stream("init", 0));
    Ok(train(&init, &data, &cfg.trainer, &contract)?.net)
}

fn fit_slope(rows: &[RateRow]) -> Option<f64> {
    let mut budgets: Vec<usize> = rows.iter().map(|r| r.budget).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let points: Vec<(f64, f64)> = budgets
        .into_iter()
        .filter_map(|b| {
            let mut errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.budget == b && !r.failed)
                .map(|r| r.measured_error)
                .collect();
            if errs.is_empty() {
                return None;
            }
            errs.sort_by(f64::total_cmp);
            let med = errs[errs.len() / 2];
            (med > 0.0).then(|| ((b as f64).ln(), med.ln()))
        })
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
