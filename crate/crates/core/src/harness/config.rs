use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::capacity::{BoundInputs, StageInputs};
use crate::envs::{BeerConfig, RecsysConfig, RewardKind};
use crate::qlearn::{DqnConfig, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DepthSweep,
    RewardCompare,
    DataSize,
    Recommender,
    ApproxCertify,
    Bounds,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::DepthSweep => "depth-sweep",
            Self::RewardCompare => "reward-compare",
            Self::DataSize => "data-size",
            Self::Recommender => "recommender",
            Self::ApproxCertify => "approx-certify",
            Self::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecPolicy {
    #[serde(rename = "DQN-s")]
    DqnStandard,
    #[serde(rename = "DQN-e")]
    DqnExpected,
    Myopic,
    Random,
}

impl RecPolicy {
    pub const ALL: [RecPolicy; 4] = [Self::DqnStandard, Self::DqnExpected, Self::Myopic, Self::Random];

    pub fn label(self) -> &'static str {
        match self {
            Self::DqnStandard => "DQN-s",
            Self::DqnExpected => "DQN-e",
            Self::Myopic => "Myopic",
            Self::Random => "Random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == s)
    }
}

/// Knobs shared by the learning studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Hidden width of the reference net.
    pub width: usize,
    /// Depth of the reference net. With `equal_budget`, every other depth
    /// gets the widest uniform net within the reference parameter count.
    pub reference_depth: usize,
    pub equal_budget: bool,
    /// Checkpoints per window in the best-segment extraction.
    pub segment_len: usize,
    /// Relative half-width of the band around the base-stock cost.
    pub band: f64,
    /// Consecutive in-band checkpoints required by the data-size study.
    pub sustain: usize,
    pub shaping_weights: [f64; 3],
    pub policies: Vec<RecPolicy>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            width: 32,
            reference_depth: 3,
            equal_budget: true,
            segment_len: 5,
            band: 0.2,
            sustain: 3,
            shaping_weights: [1.0 / 3.0; 3],
            policies: RecPolicy::ALL.to_vec(),
        }
    }
}

/// Grid of the approximation certification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub dims: Vec<usize>,
    pub resolutions: Vec<usize>,
    /// Random specs per `(d, N)` cell.
    pub specs_per_cell: usize,
    /// Largest sparsity drawn for a random spec (also capped by `N^d`).
    pub max_sparsity: usize,
    /// Ramp widths as multiples of `1/N`; each is also run at half its value.
    pub tau_factors: Vec<f64>,
    pub norms: Vec<f64>,
    pub bound: f64,
    /// Quadrature cells per gap between kinks.
    pub per_interval: usize,
    /// Include the `d = 2, N = 6, s = 4, tau = 0.01` cell measured on a
    /// uniform midpoint grid.
    pub reference_cell: bool,
    pub reference_resolution: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            resolutions: vec![1, 2, 3, 4, 5, 6],
            specs_per_cell: 10,
            max_sparsity: 12,
            tau_factors: vec![0.1, 0.01],
            norms: vec![1.0, 2.0],
            bound: 1.0,
            per_interval: 2,
            reference_cell: true,
            reference_resolution: 2000,
        }
    }
}

/// Parsed experiment file. Sections left out fall back to the presets of the
/// experiment kind; keys given in a section override single preset fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// File holding the `[beer]` or `[recsys]` section, relative to this file.
    #[serde(default)]
    pub env_file: Option<PathBuf>,
    #[serde(default)]
    pub beer: Option<toml::Table>,
    #[serde(default)]
    pub recsys: Option<toml::Table>,
    #[serde(default)]
    pub dqn: Option<toml::Table>,
    #[serde(default)]
    pub study: Option<toml::Table>,
    #[serde(default)]
    pub approx: Option<toml::Table>,
    #[serde(default)]
    pub bounds: Option<toml::Table>,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_depths() -> Vec<usize> {
    vec![1, 3]
}

/// Serializes `base`, replaces the keys present in `patch` (recursing into
/// tables) and deserializes the result.
fn overlay<T: Serialize + DeserializeOwned>(base: T, patch: Option<&toml::Table>, section: &str) -> Result<T, HarnessError> {
    let Some(patch) = patch else { return Ok(base) };
    let value = toml::Value::try_from(base).map_err(|e| HarnessError::Config(format!("[{section}]: {e}")))?;
    let mut table = match value {
        toml::Value::Table(t) => t,
        _ => return Err(HarnessError::Config(format!("[{section}] is not a table"))),
    };
    merge(&mut table, patch);
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| HarnessError::Config(format!("[{section}]: {e}")))
}

fn merge(base: &mut toml::Table, patch: &toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) if !p.contains_key("kind") => merge(b, p),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// DQN settings used for the beer-game studies unless overridden.
pub fn beer_dqn_preset() -> DqnConfig {
    DqnConfig { iterations: 20_000, target_period: 500, reward_scale: 50.0, eval_every: 1000, eval_episodes: 50, ..Default::default() }
}

/// Beer-game preset for the data-size study: every transition is used once.
pub fn data_size_dqn_preset() -> DqnConfig {
    DqnConfig { sampling: Sampling::WithoutReplacement, env_steps_per_iteration: 16, ..beer_dqn_preset() }
}

pub fn recsys_dqn_preset() -> DqnConfig {
    DqnConfig { iterations: 10_000, eval_every: 1000, eval_episodes: 100, ..Default::default() }
}

pub fn bounds_preset() -> BoundInputs<f64> {
    BoundInputs::uniform(100_000, 3, 3.0, StageInputs::default())
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: 0,
            seeds: default_seeds(),
            depths: default_depths(),
            output: None,
            env_file: None,
            beer: None,
            recsys: None,
            dqn: None,
            study: None,
            approx: None,
            bounds: None,
        }
    }

    /// Reads a TOML file and resolves `env_file` against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::load_as(path, None)
    }

    /// Like [`load`](Self::load), but a file without `kind` takes
    /// `default_kind`.
    pub fn load_as(path: &Path, default_kind: Option<ExperimentKind>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::parse_as(&text, default_kind).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(env) = cfg.env_file.take() {
            let full = path.parent().unwrap_or(Path::new(".")).join(&env);
            let text = std::fs::read_to_string(&full).map_err(|e| HarnessError::io(&full, e))?;
            let table: toml::Table = toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", full.display())))?;
            for (key, slot) in [("beer", &mut cfg.beer), ("recsys", &mut cfg.recsys)] {
                if let Some(toml::Value::Table(t)) = table.get(key) {
                    let mut merged = t.clone();
                    if let Some(inline) = slot.take() {
                        merge(&mut merged, &inline);
                    }
                    *slot = Some(merged);
                }
            }
            cfg.env_file = Some(env);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Self::parse_as(text, None)
    }

    pub fn parse_as(text: &str, default_kind: Option<ExperimentKind>) -> Result<Self, HarnessError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(kind) = default_kind {
            table.entry("kind").or_insert_with(|| kind.label().into());
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let learning = !matches!(self.kind, ExperimentKind::ApproxCertify | ExperimentKind::Bounds);
        if learning && (self.depths.is_empty() || self.depths.contains(&0)) {
            return bad("depth list must be non-empty with positive depths".into());
        }
        match self.kind {
            ExperimentKind::DepthSweep | ExperimentKind::RewardCompare | ExperimentKind::DataSize => {
                self.beer_config()?.validate()?;
                self.dqn_config()?.validate()?;
            }
            ExperimentKind::Recommender => {
                self.recsys_config()?.validate()?;
                self.dqn_config()?.validate()?;
                if self.study_config()?.policies.is_empty() {
                    return bad("policy list is empty".into());
                }
            }
            ExperimentKind::ApproxCertify => {
                let c = self.certify_config()?;
                if c.dims.contains(&0) || c.resolutions.contains(&0) || c.norms.iter().any(|p| *p < 1.0) {
                    return bad("certification grid needs d >= 1, N >= 1 and p >= 1".into());
                }
                if c.tau_factors.iter().any(|f| !(*f > 0.0 && *f < 0.5)) {
                    return bad("tau factors must lie in (0, 1/2)".into());
                }
                if c.reference_resolution < 16 || !(c.bound > 0.0) {
                    return bad("reference resolution must be at least 16 and the bound positive".into());
                }
            }
            ExperimentKind::Bounds => self.bound_inputs()?.validate()?,
        }
        Ok(())
    }

    pub fn study_config(&self) -> Result<StudyConfig, HarnessError> {
        let s: StudyConfig = overlay(StudyConfig::default(), self.study.as_ref(), "study")?;
        if s.width == 0 || s.reference_depth == 0 || s.segment_len == 0 || s.sustain == 0 || !(s.band > 0.0) {
            return Err(HarnessError::Config("study widths, windows and band must be positive".into()));
        }
        Ok(s)
    }

    /// Beer config; the reward defaults to shaped with the study weights.
    pub fn beer_config(&self) -> Result<BeerConfig, HarnessError> {
        let weights = self.study_config()?.shaping_weights;
        let base = BeerConfig { reward: RewardKind::Shaped { weights }, ..Default::default() };
        overlay(base, self.beer.as_ref(), "beer")
    }

    pub fn recsys_config(&self) -> Result<RecsysConfig, HarnessError> {
        overlay(RecsysConfig::default(), self.recsys.as_ref(), "recsys")
    }

    pub fn dqn_config(&self) -> Result<DqnConfig, HarnessError> {
        let preset = match self.kind {
            ExperimentKind::DataSize => data_size_dqn_preset(),
            ExperimentKind::Recommender => recsys_dqn_preset(),
            _ => beer_dqn_preset(),
        };
        overlay(preset, self.dqn.as_ref(), "dqn")
    }

    pub fn certify_config(&self) -> Result<CertifyConfig, HarnessError> {
        overlay(CertifyConfig::default(), self.approx.as_ref(), "approx")
    }

    pub fn bound_inputs(&self) -> Result<BoundInputs<f64>, HarnessError> {
        overlay(bounds_preset(), self.bounds.as_ref(), "bounds")
    }
}
