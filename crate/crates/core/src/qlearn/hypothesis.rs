use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::QlearnError;
use crate::approx::CubicPartition;
use crate::nets::{train, ForwardBuf, NetArchitecture, ReluNet, TrainerConfig};
use crate::rng::RngContract;

/// What `Q_t` consumes besides the action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Current observation only.
    #[default]
    Markov,
    /// All observations so far followed by all earlier action points.
    History,
}

impl InputMode {
    /// State part of the input at stage `t` (0-based) of a trajectory.
    pub fn encode(&self, states: &[Vec<f64>], actions: &[Vec<f64>], t: usize) -> Vec<f64> {
        match self {
            InputMode::Markov => states[t].clone(),
            InputMode::History => {
                let mut x: Vec<f64> = states[..=t].iter().flatten().copied().collect();
                x.extend(actions[..t].iter().flatten());
                x
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearBasis {
    /// `(1, x, a)` over the state input and action point.
    Affine,
    /// A separate `(1, x)` block per action index.
    PerActionAffine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisSpace {
    /// One value per (cell, action); cells cut every input axis into `bins`.
    Tabular { bins: usize },
    /// Least squares over a fixed basis.
    Linear { basis: LinearBasis },
    /// One hidden layer.
    Shallow { width: usize },
    /// Several hidden layers.
    Deep { widths: Vec<usize> },
}

impl HypothesisSpace {
    /// Dense net with `depth` hidden layers of a common width.
    pub fn net(depth: usize, width: usize) -> Self {
        if depth <= 1 {
            HypothesisSpace::Shallow { width }
        } else {
            HypothesisSpace::Deep { widths: vec![width; depth] }
        }
    }

    pub fn label(&self) -> String {
        match self {
            HypothesisSpace::Tabular { bins } => format!("tabular({bins})"),
            HypothesisSpace::Linear { basis } => format!("linear({basis:?})"),
            HypothesisSpace::Shallow { width } => format!("shallow({width})"),
            HypothesisSpace::Deep { widths } => format!("deep({widths:?})"),
        }
    }

    pub fn is_net(&self) -> bool {
        matches!(self, HypothesisSpace::Shallow { .. } | HypothesisSpace::Deep { .. })
    }

    pub fn widths(&self) -> Option<Vec<usize>> {
        match self {
            HypothesisSpace::Shallow { width } => Some(vec![*width]),
            HypothesisSpace::Deep { widths } => Some(widths.clone()),
            _ => None,
        }
    }
}

/// Regression sample for stage `t`: state input, action index and target.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPair {
    pub state: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

/// A fitted stage function, clamped to `[-clamp, clamp]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QFunction {
    Zero,
    Tabular {
        partition: CubicPartition,
        /// `(cell, action) -> value`; unseen cells read 0.
        #[serde(with = "entries")]
        table: BTreeMap<(usize, usize), f64>,
        clamp: f64,
    },
    Linear {
        basis: LinearBasis,
        n_actions: usize,
        coef: Vec<f64>,
        clamp: f64,
    },
    Net { net: ReluNet<f64> },
}

/// JSON objects need string keys, so the table goes out as a list of
/// `[cell, action, value]` triples.
mod entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<(usize, usize), f64>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(usize, usize, f64)> = map.iter().map(|(&(c, a), &q)| (c, a, q)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), f64>, D::Error> {
        let v = Vec::<(usize, usize, f64)>::deserialize(d)?;
        Ok(v.into_iter().map(|(c, a, q)| ((c, a), q)).collect())
    }
}

fn linear_features(basis: LinearBasis, n_actions: usize, state: &[f64], action: usize, point: &[f64]) -> Vec<f64> {
    match basis {
        LinearBasis::Affine => std::iter::once(1.0).chain(state.iter().copied()).chain(point.iter().copied()).collect(),
        LinearBasis::PerActionAffine => {
            let block = state.len() + 1;
            let mut phi = vec![0.0; n_actions * block];
            phi[action * block] = 1.0;
            phi[action * block + 1..(action + 1) * block].copy_from_slice(state);
            phi
        }
    }
}

impl QFunction {
    /// `Q(state, a)` for every action, with action points `points`.
    pub fn values(&self, state: &[f64], points: &[Vec<f64>]) -> Vec<f64> {
        match self {
            QFunction::Zero => vec![0.0; points.len()],
            QFunction::Tabular { partition, table, clamp } => {
                let cell = partition.locate(state);
                (0..points.len())
                    .map(|a| {
                        let v = cell.and_then(|c| table.get(&(c, a)).copied()).unwrap_or(0.0);
                        v.clamp(-clamp, *clamp)
                    })
                    .collect()
            }
            QFunction::Linear { basis, n_actions, coef, clamp } => points
                .iter()
                .enumerate()
                .map(|(a, p)| {
                    let phi = linear_features(*basis, *n_actions, state, a, p);
                    phi.iter().zip(coef).map(|(x, c)| x * c).sum::<f64>().clamp(-clamp, *clamp)
                })
                .collect(),
            QFunction::Net { net } => {
                let mut buf = ForwardBuf::for_net(net);
                let mut x = state.to_vec();
                points
                    .iter()
                    .map(|p| {
                        x.truncate(state.len());
                        x.extend_from_slice(p);
                        net.forward_with(&x, &mut buf)
                    })
                    .collect()
            }
        }
    }

    pub fn max_value(&self, state: &[f64], points: &[Vec<f64>]) -> f64 {
        self.values(state, points).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp(&self) -> f64 {
        match self {
            QFunction::Zero => 0.0,
            QFunction::Tabular { clamp, .. } | QFunction::Linear { clamp, .. } => *clamp,
            QFunction::Net { net } => net.arch.clamp,
        }
    }
}

/// Everything a stage fit needs besides the pairs.
pub struct FitContext<'a> {
    pub stage: usize,
    pub points: &'a [Vec<f64>],
    pub clamp: f64,
    pub trainer: &'a TrainerConfig,
    pub rng: &'a RngContract,
}

/// Fitted function and its mean squared training error.
pub fn fit_stage(
    space: &HypothesisSpace,
    pairs: &[RegressionPair],
    ctx: &FitContext<'_>,
) -> Result<(QFunction, f64), QlearnError> {
    if pairs.is_empty() {
        return Err(QlearnError::EmptyStage(ctx.stage));
    }
    let q = match space {
        HypothesisSpace::Tabular { bins } => fit_tabular(*bins, pairs, ctx)?,
        HypothesisSpace::Linear { basis } => fit_linear(*basis, pairs, ctx),
        HypothesisSpace::Shallow { .. } | HypothesisSpace::Deep { .. } => {
            let widths = space.widths().expect("net space");
            fit_net(widths, pairs, ctx)?
        }
    };
    let loss = pairs
        .iter()
        .map(|p| {
            let e = q.values(&p.state, ctx.points)[p.action] - p.target;
            e * e
        })
        .sum::<f64>()
        / pairs.len() as f64;
    Ok((q, loss))
}

fn fit_tabular(bins: usize, pairs: &[RegressionPair], ctx: &FitContext<'_>) -> Result<QFunction, QlearnError> {
    if bins == 0 {
        return Err(QlearnError::InvalidSpace("tabular bins must be positive".into()));
    }
    let partition = CubicPartition::new(pairs[0].state.len(), bins);
    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for p in pairs {
        let cell = partition
            .locate(&p.state)
            .ok_or_else(|| QlearnError::InvalidSpace("state outside the unit box".into()))?;
        let e = sums.entry((cell, p.action)).or_insert((0.0, 0));
        e.0 += p.target;
        e.1 += 1;
    }
    let table = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    Ok(QFunction::Tabular { partition, table, clamp: ctx.clamp })
}

fn fit_linear(basis: LinearBasis, pairs: &[RegressionPair], ctx: &FitContext<'_>) -> QFunction {
    let n_actions = ctx.points.len();
    let k = linear_features(basis, n_actions, &pairs[0].state, 0, &ctx.points[0]).len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for p in pairs {
        let phi = DVector::from_vec(linear_features(basis, n_actions, &p.state, p.action, &ctx.points[p.action]));
        gram.ger(1.0, &phi, &phi, 1.0);
        rhs.axpy(p.target, &phi, 1.0);
    }
    // minimum-norm solution; rank deficiency comes from unvisited actions
    let coef = gram
        .svd(true, true)
        .solve(&rhs, 1e-10)
        .map(|c| c.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; k]);
    QFunction::Linear { basis, n_actions, coef, clamp: ctx.clamp }
}

fn fit_net(widths: Vec<usize>, pairs: &[RegressionPair], ctx: &FitContext<'_>) -> Result<QFunction, QlearnError> {
    let input_dim = pairs[0].state.len() + ctx.points[0].len();
    let arch = NetArchitecture::dense(input_dim, widths, ctx.clamp)
        .map_err(|e| QlearnError::InvalidSpace(e.to_string()))?;
    let mut init_rng = ctx.rng.derive_stream("fqi-init", ctx.stage as u64);
    let net = ReluNet::init_glorot(arch, &mut init_rng);
    let data: Vec<(Vec<f64>, f64)> = pairs
        .iter()
        .map(|p| {
            let mut x = p.state.clone();
            x.extend_from_slice(&ctx.points[p.action]);
            (x, p.target)
        })
        .collect();
    let trainer = TrainerConfig { seed_label: format!("{}-stage-{}", ctx.trainer.seed_label, ctx.stage), ..ctx.trainer.clone() };
    let outcome = train(&net, &data, &trainer, ctx.rng)
        .map_err(|source| QlearnError::Divergence { stage: ctx.stage, source })?;
    Ok(QFunction::Net { net: outcome.net })
}
