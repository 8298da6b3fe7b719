use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use super::config::{ExperimentConfig, RecPolicy, StudyConfig};
use super::manifest::{CellFailure, Table};
use super::HarnessError;
use crate::envs::{base_stock_policy, BeerGame, Environment, Recommender, RewardKind, RewardMode, UniformActor};
use crate::nets::{width_for_budget, NetArchitecture};
use crate::qlearn::{dqn_train, evaluate_policy, CurvePoint, DqnConfig};
use crate::rng::RngContract;

/// Contract for one seed of a study. It depends on the master seed and the
/// seed only, so cells that differ in depth or reward share their streams.
pub fn seed_contract(master: u64, seed: u64) -> RngContract {
    RngContract::new(master).derive_contract("seed", seed)
}

/// Runs every cell, in parallel, isolating errors and panics per cell.
/// Results come back in cell order.
pub fn run_cells<C, T, F>(cells: &[C], f: F) -> Vec<Result<T, String>>
where
    C: Sync,
    T: Send,
    F: Fn(&C) -> Result<T, HarnessError> + Sync,
{
    cells
        .par_iter()
        .map(|c| match catch_unwind(AssertUnwindSafe(|| f(c))) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(e)) => Err(e.to_string()),
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into())),
        })
        .collect()
}

/// Hidden widths for `depth`. With an equal budget, the reference net's
/// parameter count caps every depth.
pub fn widths_for(depth: usize, input_dim: usize, study: &StudyConfig) -> Vec<usize> {
    if !study.equal_budget {
        return vec![study.width; depth];
    }
    let reference = NetArchitecture::dense(input_dim, vec![study.width; study.reference_depth], 1.0)
        .expect("positive widths")
        .dense_param_count();
    vec![width_for_budget(input_dim, depth, reference); depth]
}

fn net_input_dim<E: Environment>(env: &E) -> usize {
    env.spec().state_dims[0] + env.spec().action_dims[0]
}

/// Evaluation curve of one trained `(label, depth, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub depth: usize,
    pub seed: u64,
    pub widths: Vec<usize>,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn final_score(&self) -> Option<f64> {
        self.points.last().map(|p| p.eval_score)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyRun {
    pub curves: Vec<Curve>,
    pub failures: Vec<CellFailure>,
}

impl StudyRun {
    fn absorb(&mut self, cell: String, seed: u64, result: Result<Curve, String>) {
        match result {
            Ok(c) => self.curves.push(c),
            Err(error) => self.failures.push(CellFailure { cell, seed, error }),
        }
    }

    pub fn finals(&self, label: &str, depth: usize) -> Vec<f64> {
        self.curves
            .iter()
            .filter(|c| c.label == label && c.depth == depth)
            .filter_map(Curve::final_score)
            .collect()
    }

    pub fn median_final(&self, label: &str, depth: usize) -> Option<f64> {
        median(&self.finals(label, depth))
    }
}

/// Median; the mean of the two middle values for even counts.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn train_curve<E: Environment>(env: &E, dqn: &DqnConfig, label: &str, depth: usize, seed: u64, master: u64, study: &StudyConfig) -> Result<Curve, HarnessError> {
    let widths = widths_for(depth, net_input_dim(env), study);
    let cfg = DqnConfig { widths: widths.clone(), ..dqn.clone() };
    let out = dqn_train(env, &cfg, &seed_contract(master, seed))?;
    Ok(Curve { label: label.to_string(), depth, seed, widths, points: out.curve })
}

fn beer_env(cfg: &ExperimentConfig, reward: RewardKind) -> Result<BeerGame, HarnessError> {
    Ok(BeerGame::new(crate::envs::BeerConfig { reward, ..cfg.beer_config()? })?)
}

fn reward_label(kind: &RewardKind) -> &'static str {
    match kind {
        RewardKind::Classical => "classical",
        RewardKind::Shaped { .. } => "shaped",
    }
}

/// Shaped-reward learner at every configured depth.
pub fn run_depth_sweep(cfg: &ExperimentConfig) -> Result<StudyRun, HarnessError> {
    let study = cfg.study_config()?;
    let dqn = cfg.dqn_config()?;
    let beer = cfg.beer_config()?;
    let env = BeerGame::new(beer.clone())?;
    let label = reward_label(&beer.reward);
    let cells: Vec<(usize, u64)> = cfg.depths.iter().flat_map(|&d| cfg.seeds.iter().map(move |&s| (d, s))).collect();
    let results = run_cells(&cells, |&(depth, seed)| train_curve(&env, &dqn, label, depth, seed, cfg.seed, &study));
    let mut run = StudyRun::default();
    for (&(depth, seed), r) in cells.iter().zip(results) {
        run.absorb(format!("depth={depth}"), seed, r);
    }
    Ok(run)
}

/// Classical against shaped reward at every configured depth.
pub fn run_reward_compare(cfg: &ExperimentConfig) -> Result<StudyRun, HarnessError> {
    let study = cfg.study_config()?;
    let dqn = cfg.dqn_config()?;
    let envs = [
        beer_env(cfg, RewardKind::Classical)?,
        beer_env(cfg, RewardKind::Shaped { weights: study.shaping_weights })?,
    ];
    let mut cells = Vec::new();
    for e in 0..envs.len() {
        for &d in &cfg.depths {
            for &s in &cfg.seeds {
                cells.push((e, d, s));
            }
        }
    }
    let results = run_cells(&cells, |&(e, depth, seed)| {
        let env = &envs[e];
        train_curve(env, &dqn, reward_label(&env.cfg.reward), depth, seed, cfg.seed, &study)
    });
    let mut run = StudyRun::default();
    for (&(e, depth, seed), r) in cells.iter().zip(results) {
        run.absorb(format!("reward={},depth={depth}", reward_label(&envs[e].cfg.reward)), seed, r);
    }
    Ok(run)
}

/// Best mean over windows of `len` consecutive checkpoints (lowest cost);
/// later windows win ties. Returns `(first, last, mean)` checkpoint indices.
pub fn best_segment(costs: &[f64], len: usize) -> Option<(usize, usize, f64)> {
    if len == 0 || costs.len() < len {
        return None;
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for start in 0..=costs.len() - len {
        let mean = costs[start..start + len].iter().sum::<f64>() / len as f64;
        if best.is_none_or(|(_, _, m)| mean <= m) {
            best = Some((start, start + len - 1, mean));
        }
    }
    best
}

/// First checkpoint from which `sustain` consecutive costs stay within
/// `band * |baseline|` of the baseline; returns its consumed-sample count.
pub fn sustained_threshold(points: &[CurvePoint], baseline: f64, band: f64, sustain: usize) -> Option<u64> {
    let inside: Vec<bool> = points.iter().map(|p| (p.eval_score - baseline).abs() <= band * baseline.abs()).collect();
    (0..points.len())
        .find(|&i| i + sustain <= points.len() && inside[i..i + sustain].iter().all(|&b| b))
        .map(|i| points[i].samples_consumed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub depth: usize,
    pub seed: u64,
    pub baseline: f64,
    pub samples: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataSizeRun {
    pub run: StudyRun,
    pub thresholds: Vec<Threshold>,
}

impl DataSizeRun {
    /// Median threshold with "never" ranked above every count; `None` when
    /// the median itself is "never".
    pub fn median_threshold(&self, depth: usize) -> Option<f64> {
        let xs: Vec<f64> = self
            .thresholds
            .iter()
            .filter(|t| t.depth == depth)
            .map(|t| t.samples.map_or(f64::INFINITY, |s| s as f64))
            .collect();
        median(&xs).filter(|m| m.is_finite())
    }
}

/// Learning curves against consumed samples, plus the base-stock band
/// threshold per cell. The baseline for a seed is evaluated on the same
/// episodes as that seed's checkpoints.
pub fn run_data_size_study(cfg: &ExperimentConfig) -> Result<DataSizeRun, HarnessError> {
    let study = cfg.study_config()?;
    let dqn = cfg.dqn_config()?;
    if dqn.sampling != crate::qlearn::Sampling::WithoutReplacement {
        return Err(HarnessError::Config("the data-size study needs without-replacement sampling".into()));
    }
    let beer = cfg.beer_config()?;
    let env = BeerGame::new(beer.clone())?;
    let label = reward_label(&beer.reward);
    let bs = base_stock_policy(&beer);
    let baselines = run_cells(&cfg.seeds, |&seed| {
        let contract = seed_contract(cfg.seed, seed).derive_contract("dqn-eval", 0);
        Ok(evaluate_policy(&env, &bs, dqn.eval_episodes, &contract)?.scores.mean)
    });
    let cells: Vec<(usize, u64)> = cfg.depths.iter().flat_map(|&d| cfg.seeds.iter().map(move |&s| (d, s))).collect();
    let results = run_cells(&cells, |&(depth, seed)| train_curve(&env, &dqn, label, depth, seed, cfg.seed, &study));
    let mut out = DataSizeRun::default();
    for (&(depth, seed), r) in cells.iter().zip(results) {
        let idx = cfg.seeds.iter().position(|&s| s == seed).expect("cell seed is configured");
        match (&r, &baselines[idx]) {
            (Ok(curve), Ok(b)) => out.thresholds.push(Threshold {
                depth,
                seed,
                baseline: *b,
                samples: sustained_threshold(&curve.points, *b, study.band, study.sustain),
            }),
            (_, Err(e)) => out.run.failures.push(CellFailure { cell: "baseline".into(), seed, error: e.clone() }),
            _ => {}
        }
        out.run.absorb(format!("depth={depth}"), seed, r);
    }
    Ok(out)
}

/// Ordinary least squares fit `y = a + b x` with a normal-approximation
/// 95% interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl SlopeFit {
    pub fn contains_zero(&self) -> bool {
        self.ci_low <= 0.0 && 0.0 <= self.ci_high
    }
}

pub fn fit_slope(xy: &[(f64, f64)]) -> Option<SlopeFit> {
    let n = xy.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (rss / (nf - 2.0) / sxx).sqrt();
    let half = 1.96 * stderr;
    Some(SlopeFit { slope, stderr, ci_low: slope - half, ci_high: slope + half, n })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecommenderRun {
    pub run: StudyRun,
    pub random_slope: Option<SlopeFit>,
}

/// Depth recorded for policies without a network.
pub const NO_NET: usize = 0;

/// DQN-s, DQN-e, Myopic and Random on the recommender. Random is evaluated
/// at the same checkpoints as the learners, on fresh episodes each time.
pub fn run_recommender_study(cfg: &ExperimentConfig) -> Result<RecommenderRun, HarnessError> {
    let study = cfg.study_config()?;
    let dqn = cfg.dqn_config()?;
    let base = Recommender::new(cfg.recsys_config()?)?;
    let standard = base.with_reward(RewardMode::Standard);
    let expected = base.with_reward(RewardMode::Expected);
    let mut policies = study.policies.clone();
    policies.sort();
    policies.dedup();
    let mut cells = Vec::new();
    for &p in &policies {
        let depths = if p == RecPolicy::Random { vec![NO_NET] } else { cfg.depths.clone() };
        for d in depths {
            for &s in &cfg.seeds {
                cells.push((p, d, s));
            }
        }
    }
    let results = run_cells(&cells, |&(policy, depth, seed)| match policy {
        RecPolicy::DqnStandard => train_curve(&standard, &dqn, policy.label(), depth, seed, cfg.seed, &study),
        RecPolicy::DqnExpected => train_curve(&expected, &dqn, policy.label(), depth, seed, cfg.seed, &study),
        RecPolicy::Myopic => {
            let myopic = DqnConfig { gamma: 0.0, ..dqn.clone() };
            train_curve(&expected, &myopic, policy.label(), depth, seed, cfg.seed, &study)
        }
        RecPolicy::Random => {
            let contract = seed_contract(cfg.seed, seed);
            let points = (1..=dqn.iterations / dqn.eval_every)
                .map(|c| {
                    let ev = evaluate_policy(&base, &UniformActor, dqn.eval_episodes, &contract.derive_contract("random-eval", c as u64))?;
                    Ok(CurvePoint {
                        iteration: c * dqn.eval_every,
                        samples_consumed: 0,
                        train_loss: None,
                        eval_score: ev.scores.mean,
                        eval_stderr: ev.scores.stderr,
                        eval_return: ev.returns.mean,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            Ok(Curve { label: policy.label().into(), depth, seed, widths: Vec::new(), points })
        }
    });
    let mut out = RecommenderRun::default();
    for (&(policy, depth, seed), r) in cells.iter().zip(results) {
        out.run.absorb(format!("policy={},depth={depth}", policy.label()), seed, r);
    }
    let random: Vec<(f64, f64)> = out
        .run
        .curves
        .iter()
        .filter(|c| c.label == RecPolicy::Random.label())
        .flat_map(|c| c.points.iter().map(|p| (p.iteration as f64, p.eval_score)))
        .collect();
    out.random_slope = fit_slope(&random);
    Ok(out)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn depth_sweep_tables(run: &StudyRun, study: &StudyConfig) -> Vec<Table> {
    let mut curves = Table::new("depth_sweep.csv", "depth_sweep/v1", &["depth", "seed", "iteration", "eval_cost"]);
    let mut segments = Table::new(
        "depth_segments.csv",
        "depth_segments/v1",
        &["depth", "seed", "first_iteration", "last_iteration", "mean_cost"],
    );
    for c in &run.curves {
        for p in &c.points {
            curves.push(vec![c.depth.to_string(), c.seed.to_string(), p.iteration.to_string(), num(p.eval_score)]);
        }
        let costs: Vec<f64> = c.points.iter().map(|p| p.eval_score).collect();
        if let Some((a, b, m)) = best_segment(&costs, study.segment_len) {
            segments.push(vec![
                c.depth.to_string(),
                c.seed.to_string(),
                c.points[a].iteration.to_string(),
                c.points[b].iteration.to_string(),
                num(m),
            ]);
        }
    }
    vec![curves, segments, summary_table("depth_summary.csv", run)]
}

pub fn reward_compare_tables(run: &StudyRun) -> Vec<Table> {
    let mut curves = Table::new(
        "reward_compare.csv",
        "reward_compare/v1",
        &["reward", "depth", "seed", "iteration", "eval_cost", "eval_stderr"],
    );
    for c in &run.curves {
        for p in &c.points {
            curves.push(vec![
                c.label.clone(),
                c.depth.to_string(),
                c.seed.to_string(),
                p.iteration.to_string(),
                num(p.eval_score),
                num(p.eval_stderr),
            ]);
        }
    }
    vec![curves, summary_table("reward_summary.csv", run)]
}

pub fn data_size_tables(out: &DataSizeRun) -> Vec<Table> {
    let mut curves = Table::new("data_size.csv", "data_size/v1", &["depth", "seed", "samples_consumed", "eval_cost"]);
    for c in &out.run.curves {
        for p in &c.points {
            curves.push(vec![c.depth.to_string(), c.seed.to_string(), p.samples_consumed.to_string(), num(p.eval_score)]);
        }
    }
    let mut thr = Table::new(
        "data_size_thresholds.csv",
        "data_size_thresholds/v1",
        &["depth", "seed", "baseline_cost", "threshold_samples"],
    );
    for t in &out.thresholds {
        thr.push(vec![
            t.depth.to_string(),
            t.seed.to_string(),
            num(t.baseline),
            t.samples.map(|s| s.to_string()).unwrap_or_default(),
        ]);
    }
    vec![curves, thr, summary_table("data_size_summary.csv", &out.run)]
}

pub fn recommender_tables(out: &RecommenderRun) -> Vec<Table> {
    let mut curves = Table::new("recommender.csv", "recommender/v1", &["policy", "depth", "seed", "step", "mean_reward"]);
    for c in &out.run.curves {
        for p in &c.points {
            curves.push(vec![c.label.clone(), c.depth.to_string(), c.seed.to_string(), p.iteration.to_string(), num(p.eval_score)]);
        }
    }
    let mut slope = Table::new("random_slope.csv", "random_slope/v1", &["slope", "stderr", "ci_low", "ci_high", "points"]);
    if let Some(s) = out.random_slope {
        slope.push(vec![num(s.slope), num(s.stderr), num(s.ci_low), num(s.ci_high), s.n.to_string()]);
    }
    vec![curves, summary_table("recommender_summary.csv", &out.run), slope]
}

/// Median final score per `(label, depth)`, in first-seen order.
fn summary_table(file: &str, run: &StudyRun) -> Table {
    let schema = format!("{}/v1", file.trim_end_matches(".csv"));
    let mut t = Table::new(file, &schema, &["label", "depth", "seeds", "median_final"]);
    let mut seen: Vec<(String, usize)> = Vec::new();
    for c in &run.curves {
        let key = (c.label.clone(), c.depth);
        if !seen.contains(&key) {
            seen.push(key);
        }
    }
    for (label, depth) in seen {
        let finals = run.finals(&label, depth);
        t.push(vec![label.clone(), depth.to_string(), finals.len().to_string(), opt(median(&finals))]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(i: usize, s: u64, c: f64) -> CurvePoint {
        CurvePoint { iteration: i, samples_consumed: s, train_loss: None, eval_score: c, eval_stderr: 0.0, eval_return: -c }
    }

    #[test]
    fn monotone_curve_picks_last_window() {
        let costs: Vec<f64> = (0..10).map(|i| 100.0 - i as f64).collect();
        assert_eq!(best_segment(&costs, 3), Some((7, 9, 92.0)));
        assert_eq!(best_segment(&costs, 11), None);
        assert_eq!(best_segment(&[5.0, 5.0], 1).unwrap().0, 1);
    }

    #[test]
    fn threshold_needs_a_sustained_run() {
        let pts: Vec<CurvePoint> = [200.0, 105.0, 300.0, 110.0, 95.0, 101.0, 400.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| point(i, 16 * i as u64, c))
            .collect();
        assert_eq!(sustained_threshold(&pts, 100.0, 0.2, 3), Some(48));
        assert_eq!(sustained_threshold(&pts, 100.0, 0.2, 1), Some(16));
        assert_eq!(sustained_threshold(&pts, 100.0, 0.2, 4), None);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn slope_of_a_line_and_of_noise() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let f = fit_slope(&line).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.stderr < 1e-9 && !f.contains_zero());
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, if i % 2 == 0 { 1.0 } else { -1.0 })).collect();
        assert!(fit_slope(&flat).unwrap().contains_zero());
        assert!(fit_slope(&line[..2]).is_none());
    }

    #[test]
    fn equal_budget_widths() {
        let study = StudyConfig::default();
        assert_eq!(widths_for(3, 9, &study), vec![32; 3]);
        assert_eq!(widths_for(1, 9, &study), vec![224]);
        let fixed = StudyConfig { equal_budget: false, ..study };
        assert_eq!(widths_for(2, 9, &fixed), vec![32; 2]);
    }

    #[test]
    fn cell_panics_are_isolated() {
        let out = run_cells(&[1, 2, 3], |&x| if x == 2 { panic!("boom {x}") } else { Ok(x * 10) });
        assert_eq!(out[0], Ok(10));
        assert_eq!(out[1], Err("boom 2".to_string()));
        assert_eq!(out[2], Ok(30));
    }
}
