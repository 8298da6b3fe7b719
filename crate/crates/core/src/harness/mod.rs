//! Experiment orchestration: configuration files, the beer-game and
//! recommender studies, approximation certification, bound reports and run
//! manifests.
//!
//! Every run writes CSV tables plus `manifest.toml` into one directory;
//! [`report`] re-derives the acceptance checks from such a directory.

mod certify;
pub mod config;
mod manifest;
mod report;
mod studies;

pub use certify::{
    bounds_table, emit_bounds, reference_cell, run_approx_certify, CertifyReport, CertifyRow, HalvingRow,
    HALVING_RANGE,
};
pub use config::{CertifyConfig, ExperimentConfig, ExperimentKind, RecPolicy, StudyConfig};
pub use manifest::{read_table, sha256_hex, CellFailure, OutputEntry, RunManifest, Table, MANIFEST_FILE};
pub use report::{all_pass, checks_table, report, Check, DEPTH_RATIO};
pub use studies::{
    best_segment, data_size_tables, depth_sweep_tables, fit_slope, median, recommender_tables, reward_compare_tables,
    run_cells, run_data_size_study, run_depth_sweep, run_recommender_study, run_reward_compare, seed_contract,
    sustained_threshold, widths_for, Curve, DataSizeRun, RecommenderRun, SlopeFit, StudyRun, Threshold, NO_NET,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::approx::ApproxError;
use crate::capacity::CapacityError;
use crate::envs::EnvError;
use crate::qlearn::QlearnError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Qlearn(#[from] QlearnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// Errors caused by the configuration rather than by the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::Qlearn(QlearnError::InvalidConfig(_))
                | Self::Env(EnvError::InvalidConfig(_))
                | Self::Capacity(CapacityError::InvalidInputs(_))
        )
    }
}

/// Runs the experiment described by `cfg` and writes its tables and
/// manifest into `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut manifest = RunManifest::new(cfg);
    let (tables, failures) = match cfg.kind {
        ExperimentKind::DepthSweep => {
            let run = run_depth_sweep(cfg)?;
            (depth_sweep_tables(&run, &cfg.study_config()?), run.failures)
        }
        ExperimentKind::RewardCompare => {
            let run = run_reward_compare(cfg)?;
            (reward_compare_tables(&run), run.failures)
        }
        ExperimentKind::DataSize => {
            let out = run_data_size_study(cfg)?;
            (data_size_tables(&out), out.run.failures)
        }
        ExperimentKind::Recommender => {
            let out = run_recommender_study(cfg)?;
            (recommender_tables(&out), out.run.failures)
        }
        ExperimentKind::ApproxCertify => (run_approx_certify(cfg)?.tables(), Vec::new()),
        ExperimentKind::Bounds => {
            let reports = emit_bounds(&cfg.bound_inputs()?)?;
            let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
            let path = dir.join("bounds.json");
            std::fs::write(&path, &json).map_err(|e| HarnessError::io(&path, e))?;
            manifest.record(dir, "bounds.json", "bounds_json/v1", reports.len())?;
            (vec![bounds_table(&reports)], Vec::new())
        }
    };
    for t in &tables {
        t.write(dir, &mut manifest)?;
    }
    manifest.failures = failures;
    manifest.write(dir)?;
    Ok(manifest)
}
