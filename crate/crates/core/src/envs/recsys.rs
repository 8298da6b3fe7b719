//! Slate recommender with a multinomial-logit user and drifting interests.
//!
//! Each period the system shows two distinct documents. The user clicks one
//! of them or neither; document `d` has utility
//! `affinity * interest[topic_d] + quality_d` against a fixed no-click
//! utility. A click moves the interest vector toward the one-hot vector of
//! the clicked topic and yields engagement `engagement_d` times a uniform
//! multiplicative noise with mean one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, Environment, Step};
use crate::data::ProblemSpec;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub topic: usize,
    pub quality: f64,
    /// Mean engagement when clicked.
    pub engagement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Realized engagement of the clicked document, 0 on no click.
    Standard,
    /// Expected engagement under the choice model.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecsysConfig {
    pub topics: usize,
    pub session: usize,
    pub affinity: f64,
    pub no_click_utility: f64,
    pub interest_rate: f64,
    /// Half-width of the multiplicative engagement noise.
    pub engagement_noise: f64,
    pub initial_interest: Vec<f64>,
    /// Uniform perturbation of each initial interest coordinate.
    pub interest_jitter: f64,
    pub catalog: Vec<Document>,
    pub reward: RewardMode,
}

impl Default for RecsysConfig {
    fn default() -> Self {
        Self {
            topics: 5,
            session: 10,
            affinity: 4.0,
            no_click_utility: 1.0,
            interest_rate: 0.4,
            engagement_noise: 0.8,
            initial_interest: vec![0.1, 0.6, 0.3, 0.3, 0.3],
            interest_jitter: 0.1,
            catalog: default_catalog(5, 20),
            reward: RewardMode::Expected,
        }
    }
}

/// Documents cycle through topics. Topic 0 is a slow-burning premium topic
/// (low quality, high engagement), topic 1 clickbait (high quality, low
/// engagement), the rest sit in between.
pub fn default_catalog(topics: usize, docs: usize) -> Vec<Document> {
    (0..docs)
        .map(|d| {
            let topic = d % topics;
            let rank = (d / topics) as f64;
            let (quality, engagement) = match topic {
                0 => (-1.0, 1.0),
                1 => (1.0, 0.25),
                _ => (0.0, 0.3),
            };
            Document { topic, quality: quality - 0.1 * rank, engagement: engagement + 0.02 * rank }
        })
        .collect()
}

impl RecsysConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.topics == 0 || self.session == 0 {
            return bad("topics and session length must be positive");
        }
        if self.catalog.len() < 2 {
            return bad("catalog needs at least two documents");
        }
        if self.catalog.iter().any(|d| d.topic >= self.topics || !(d.engagement >= 0.0) || !d.quality.is_finite()) {
            return bad("document topic out of range or bad engagement");
        }
        if self.initial_interest.len() != self.topics {
            return bad("initial interest has the wrong length");
        }
        if !(0.0..=1.0).contains(&self.interest_rate) || !(0.0..=1.0).contains(&self.engagement_noise) {
            return bad("interest rate and engagement noise must lie in [0, 1]");
        }
        if !(self.interest_jitter >= 0.0) || !self.affinity.is_finite() || !self.no_click_utility.is_finite() {
            return bad("bad jitter, affinity or no-click utility");
        }
        Ok(())
    }

    pub fn num_slates(&self) -> usize {
        let n = self.catalog.len();
        n * (n - 1) / 2
    }

    /// Slate of action index `k`, pairs `(i, j)` with `i < j` in lexicographic order.
    pub fn slate(&self, k: usize) -> [usize; 2] {
        let n = self.catalog.len();
        let mut k = k;
        for i in 0..n {
            let row = n - 1 - i;
            if k < row {
                return [i, i + 1 + k];
            }
            k -= row;
        }
        panic!("slate index out of range")
    }

    fn max_reward(&self) -> f64 {
        let e = self.catalog.iter().map(|d| d.engagement).fold(0.0, f64::max);
        e * (1.0 + self.engagement_noise)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecsysState {
    pub t: usize,
    pub interest: Vec<f64>,
}

/// Choice probabilities `[first, second, no click]`.
pub fn click_probabilities(cfg: &RecsysConfig, interest: &[f64], slate: [usize; 2]) -> [f64; 3] {
    let u = |d: usize| {
        let doc = &cfg.catalog[d];
        cfg.affinity * interest[doc.topic] + doc.quality
    };
    let utils = [u(slate[0]), u(slate[1]), cfg.no_click_utility];
    let top = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = utils.map(|x| (x - top).exp());
    let z: f64 = w.iter().sum();
    w.map(|x| x / z)
}

fn expected_engagement(cfg: &RecsysConfig, probs: &[f64; 3], slate: [usize; 2]) -> f64 {
    probs[0] * cfg.catalog[slate[0]].engagement + probs[1] * cfg.catalog[slate[1]].engagement
}

/// One period. Returns the next state, the reward in `mode` and the
/// expected engagement (the evaluation score).
pub fn recommender_step(
    cfg: &RecsysConfig,
    state: &RecsysState,
    slate: [usize; 2],
    mode: RewardMode,
    rng: &mut Stream,
) -> Result<(RecsysState, f64, f64), EnvError> {
    let n = cfg.catalog.len();
    if slate[0] == slate[1] || slate[0] >= n || slate[1] >= n {
        return Err(EnvError::InvalidConfig(format!("malformed slate {slate:?}")));
    }
    let probs = click_probabilities(cfg, &state.interest, slate);
    let expected = expected_engagement(cfg, &probs, slate);
    let u: f64 = rng.random();
    let noise: f64 = rng.random_range(-1.0..=1.0);
    let choice = if u < probs[0] {
        Some(slate[0])
    } else if u < probs[0] + probs[1] {
        Some(slate[1])
    } else {
        None
    };
    let mut interest = state.interest.clone();
    let mut realized = 0.0;
    if let Some(d) = choice {
        let doc = &cfg.catalog[d];
        realized = doc.engagement * (1.0 + cfg.engagement_noise * noise);
        for (k, x) in interest.iter_mut().enumerate() {
            let target = if k == doc.topic { 1.0 } else { 0.0 };
            *x = (*x + cfg.interest_rate * (target - *x)).clamp(0.0, 1.0);
        }
    }
    let reward = match mode {
        RewardMode::Standard => realized,
        RewardMode::Expected => expected,
    };
    Ok((RecsysState { t: state.t + 1, interest }, reward, expected))
}

#[derive(Debug, Clone)]
pub struct Recommender {
    pub cfg: RecsysConfig,
    spec: ProblemSpec,
}

impl Recommender {
    pub fn new(cfg: RecsysConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let n = cfg.catalog.len();
        let points: Vec<Vec<f64>> = (0..cfg.num_slates())
            .map(|k| {
                let s = cfg.slate(k);
                (0..n).map(|d| if d == s[0] || d == s[1] { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        let spec = ProblemSpec::new(
            cfg.session,
            vec![cfg.topics + 1; cfg.session + 1],
            vec![points; cfg.session],
            cfg.max_reward(),
            cfg.num_slates() as f64,
        )?;
        Ok(Self { cfg, spec })
    }

    pub fn with_reward(&self, reward: RewardMode) -> Self {
        Self { cfg: RecsysConfig { reward, ..self.cfg.clone() }, spec: self.spec.clone() }
    }
}

impl Environment for Recommender {
    type State = RecsysState;

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn name(&self) -> String {
        match self.cfg.reward {
            RewardMode::Standard => "recommender-standard".into(),
            RewardMode::Expected => "recommender-expected".into(),
        }
    }

    fn reset(&self, rng: &mut Stream) -> RecsysState {
        let j = self.cfg.interest_jitter;
        let interest = self
            .cfg
            .initial_interest
            .iter()
            .map(|&x| {
                let e: f64 = rng.random_range(-1.0..=1.0);
                (x + j * e).clamp(0.0, 1.0)
            })
            .collect();
        RecsysState { t: 0, interest }
    }

    /// Interest vector followed by `t / T`.
    fn observe(&self, state: &RecsysState) -> Vec<f64> {
        let mut x = state.interest.clone();
        x.push(state.t as f64 / self.cfg.session as f64);
        x
    }

    fn stage(&self, state: &RecsysState) -> usize {
        state.t
    }

    fn step(&self, state: &RecsysState, action: usize, rng: &mut Stream) -> Step<RecsysState> {
        let slate = self.cfg.slate(action);
        let (next, reward, expected) =
            recommender_step(&self.cfg, state, slate, self.cfg.reward, rng).expect("slate index is valid");
        Step { state: next, reward, score: expected }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngContract;

    fn state(interest: Vec<f64>) -> RecsysState {
        RecsysState { t: 0, interest }
    }

    #[test]
    fn slate_indexing_covers_all_pairs() {
        let cfg = RecsysConfig::default();
        assert_eq!(cfg.num_slates(), 190);
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..190 {
            let [i, j] = cfg.slate(k);
            assert!(i < j && j < 20);
            seen.insert((i, j));
        }
        assert_eq!(seen.len(), 190);
        assert_eq!(cfg.slate(0), [0, 1]);
        assert_eq!(cfg.slate(189), [18, 19]);
    }

    #[test]
    fn expected_mode_matches_monte_carlo() {
        let cfg = RecsysConfig::default();
        let s = state(vec![0.4, 0.5, 0.2, 0.3, 0.1]);
        let slate = [0, 6];
        let mut rng = RngContract::new(9).derive_stream("mc", 0);
        let (_, expected, _) = recommender_step(&cfg, &s, slate, RewardMode::Expected, &mut rng).unwrap();
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| recommender_step(&cfg, &s, slate, RewardMode::Standard, &mut rng).unwrap().1)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - expected).abs() <= 3.0 * se, "{mean} vs {expected} (se {se})");
    }

    #[test]
    fn dominant_no_click_gives_near_zero_reward() {
        let catalog = vec![Document { topic: 0, quality: 0.0, engagement: 0.5 }; 3];
        let cfg = RecsysConfig {
            topics: 1,
            affinity: 0.0,
            no_click_utility: 7.0,
            initial_interest: vec![0.0],
            catalog,
            ..Default::default()
        };
        let mut rng = RngContract::new(0).derive_stream("x", 0);
        let p = click_probabilities(&cfg, &[0.0], [0, 1]);
        assert!(p[0] < 1e-3 && p[1] < 1e-3);
        let (_, r, _) = recommender_step(&cfg, &state(vec![0.0]), [0, 1], RewardMode::Expected, &mut rng).unwrap();
        assert!(r < 1e-3, "{r}");
    }

    #[test]
    fn identical_documents_are_symmetric() {
        let mut cfg = RecsysConfig::default();
        cfg.catalog[7] = cfg.catalog[2].clone();
        let p = click_probabilities(&cfg, &[0.3, 0.2, 0.9, 0.1, 0.5], [2, 7]);
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn malformed_slate_rejected() {
        let cfg = RecsysConfig::default();
        let mut rng = RngContract::new(0).derive_stream("x", 0);
        let s = state(cfg.initial_interest.clone());
        assert!(recommender_step(&cfg, &s, [3, 3], RewardMode::Standard, &mut rng).is_err());
        assert!(recommender_step(&cfg, &s, [3, 20], RewardMode::Standard, &mut rng).is_err());
    }

    #[test]
    fn probabilities_and_interest_stay_valid() {
        let env = Recommender::new(RecsysConfig::default()).unwrap();
        let rng = RngContract::new(4);
        for ep in 0..200 {
            let mut stream = rng.derive_stream("ep", ep);
            let mut s = env.reset(&mut stream);
            for _ in 0..env.horizon() {
                let a = stream.random_range(0..190);
                let p = click_probabilities(&env.cfg, &s.interest, env.cfg.slate(a));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let step = env.transition(&s, a, &mut stream).unwrap();
                assert!(step.state.interest.iter().all(|x| (0.0..=1.0).contains(x)));
                s = step.state;
            }
        }
    }
}
