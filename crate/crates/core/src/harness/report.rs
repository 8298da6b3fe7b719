use std::collections::BTreeMap;
use std::path::Path;

use super::certify::HALVING_RANGE;
use super::config::{ExperimentConfig, ExperimentKind, RecPolicy};
use super::manifest::{read_table, RunManifest, Table};
use super::studies::{median, NO_NET};
use super::HarnessError;
use crate::approx::band_l1_bound;

/// Depth-effect target: deep median final cost at most this share of the
/// shallow one.
pub const DEPTH_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: String,
    pub target: String,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, value: impl ToString, target: &str, pass: bool) -> Self {
        Self { name: name.into(), value: value.to_string(), target: target.into(), pass }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {} (target {})", self.name, self.value, self.target)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

pub fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new("report.csv", "report/v1", &["check", "value", "target", "pass"]);
    for c in checks {
        t.push(vec![c.name.clone(), c.value.clone(), c.target.clone(), c.pass.to_string()]);
    }
    t
}

type Rows = Vec<BTreeMap<String, String>>;

fn load(dir: &Path, file: &str) -> Result<Rows, HarnessError> {
    let (header, rows) = read_table(&dir.join(file))?;
    Ok(rows
        .into_iter()
        .map(|r| header.iter().cloned().zip(r).collect())
        .collect())
}

fn field<T: std::str::FromStr>(row: &BTreeMap<String, String>, key: &str) -> Result<T, HarnessError> {
    row.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| HarnessError::Config(format!("column {key} missing or malformed")))
}

/// `(label, depth) -> median final` from a summary table.
fn medians(dir: &Path, file: &str) -> Result<BTreeMap<(String, usize), f64>, HarnessError> {
    let mut out = BTreeMap::new();
    for r in load(dir, file)? {
        if let Ok(m) = field::<f64>(&r, "median_final") {
            out.insert((r["label"].clone(), field(&r, "depth")?), m);
        }
    }
    Ok(out)
}

fn fmt(x: Option<f64>) -> String {
    x.map_or("missing".into(), |v| format!("{v:.4}"))
}

fn less(name: &str, a: Option<f64>, b: Option<f64>, target: &str) -> Check {
    let pass = matches!((a, b), (Some(a), Some(b)) if a < b);
    Check::new(name, format!("{} vs {}", fmt(a), fmt(b)), target, pass)
}

/// Re-derives the acceptance checks of a finished run from its output
/// directory.
pub fn report(dir: &Path) -> Result<Vec<Check>, HarnessError> {
    let manifest = RunManifest::read(dir)?;
    let mut checks = Vec::new();
    let tampered = manifest.verify(dir);
    checks.push(Check::new("checksums", format!("{} mismatched", tampered.len()), "0", tampered.is_empty()));
    checks.push(Check::new(
        "cell failures",
        manifest.failures.len(),
        "0",
        manifest.failures.is_empty(),
    ));
    // single commands (gen-data, fit-q, dqn) carry no acceptance checks
    let Ok(cfg) = ExperimentConfig::parse(&manifest.config) else {
        return Ok(checks);
    };
    let shallow = cfg.depths.iter().copied().min().unwrap_or(1);
    let deep = cfg.depths.iter().copied().max().unwrap_or(1);
    match cfg.kind {
        ExperimentKind::ApproxCertify => {
            let rows = load(dir, "approx_certify.csv")?;
            let failed = rows.iter().filter(|r| r["pass"] != "true").count();
            checks.push(Check::new("certified rows", format!("{} of {} pass", rows.len() - failed, rows.len()), "all", failed == 0));
            let empty: Vec<f64> = rows
                .iter()
                .filter(|r| r["s"] == "0")
                .map(|r| field(r, "measured"))
                .collect::<Result<_, _>>()?;
            checks.push(Check::new(
                "empty support error",
                fmt(empty.iter().copied().reduce(f64::max)),
                "0",
                !empty.is_empty() && empty.iter().all(|&e| e == 0.0),
            ));
            let reference = rows.iter().find(|r| r["d"] == "2" && r["N"] == "6" && r["s"] == "4" && r["tau"] == "0.01" && r["p"] == "1");
            if let Some(r) = reference {
                let m: f64 = field(r, "measured")?;
                let limit = band_l1_bound(2, 1.0, 4, 0.01, 6);
                checks.push(Check::new("reference cell L1 error", format!("{m:.6}"), &format!("<= {limit:.4}"), m <= limit && r["pass"] == "true"));
            }
            let halving = load(dir, "approx_halving.csv")?;
            let bad = halving.iter().filter(|r| r["pass"] != "true").count();
            checks.push(Check::new(
                "tau halving ratio",
                format!("{} of {} in range", halving.len() - bad, halving.len()),
                &format!("all in [{}, {}]", HALVING_RANGE.0, HALVING_RANGE.1),
                bad == 0,
            ));
        }
        ExperimentKind::DepthSweep => {
            let m = medians(dir, "depth_summary.csv")?;
            let label = m.keys().next().map(|k| k.0.clone()).unwrap_or_default();
            let a = m.get(&(label.clone(), deep)).copied();
            let b = m.get(&(label, shallow)).copied();
            let ratio = a.zip(b).map(|(a, b)| a / b);
            checks.push(Check::new(
                &format!("depth {deep} / depth {shallow} median final cost"),
                fmt(ratio),
                &format!("<= {DEPTH_RATIO}"),
                ratio.is_some_and(|r| r <= DEPTH_RATIO),
            ));
        }
        ExperimentKind::RewardCompare => {
            let m = medians(dir, "reward_summary.csv")?;
            let get = |l: &str, d: usize| m.get(&(l.to_string(), d)).copied();
            checks.push(less("deep shaped < deep classical", get("shaped", deep), get("classical", deep), "lower cost"));
            checks.push(less("deep shaped < shallow shaped", get("shaped", deep), get("shaped", shallow), "lower cost"));
        }
        ExperimentKind::DataSize => {
            let rows = load(dir, "data_size_thresholds.csv")?;
            let med = |d: usize| -> Result<Option<f64>, HarnessError> {
                let xs = rows
                    .iter()
                    .filter(|r| r["depth"] == d.to_string())
                    .map(|r| Ok(field::<f64>(r, "threshold_samples").unwrap_or(f64::INFINITY)))
                    .collect::<Result<Vec<f64>, HarnessError>>()?;
                Ok(median(&xs).filter(|m| m.is_finite()))
            };
            checks.push(less("deep reaches band at fewer samples", med(deep)?, med(shallow)?, "strictly fewer"));
        }
        ExperimentKind::Recommender => {
            let m = medians(dir, "recommender_summary.csv")?;
            let get = |p: RecPolicy, d: usize| m.get(&(p.label().to_string(), d)).copied();
            checks.push(less(
                &format!("Myopic < DQN-e depth {deep}"),
                get(RecPolicy::Myopic, deep),
                get(RecPolicy::DqnExpected, deep),
                "higher reward",
            ));
            checks.push(less("Random < Myopic", get(RecPolicy::Random, NO_NET), get(RecPolicy::Myopic, deep), "higher reward"));
            let slope = load(dir, "random_slope.csv")?;
            let ci = slope
                .first()
                .map(|r| Ok::<_, HarnessError>((field::<f64>(r, "ci_low")?, field::<f64>(r, "ci_high")?)))
                .transpose()?;
            checks.push(Check::new(
                "Random slope CI",
                ci.map_or("missing".into(), |(a, b)| format!("[{a:.3e}, {b:.3e}]")),
                "contains 0",
                ci.is_some_and(|(a, b)| a <= 0.0 && 0.0 <= b),
            ));
        }
        ExperimentKind::Bounds => {
            let rows = load(dir, "bounds.csv")?;
            let finite = rows
                .iter()
                .all(|r| field::<f64>(r, "contribution").is_ok_and(|v| v.is_finite() && v >= 0.0));
            checks.push(Check::new("bound values", format!("{} rows", rows.len()), "finite and nonnegative", finite && !rows.is_empty()));
        }
    }
    Ok(checks)
}
