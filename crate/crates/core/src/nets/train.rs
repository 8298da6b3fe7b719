use serde::{Deserialize, Serialize};

use super::{Gradient, NetError, ReluNet};
use crate::rng::RngContract;
use crate::scalar::Scalar;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { rate: f64 },
    /// `rate / (1 + decay * iteration)`.
    InverseTime { rate: f64, decay: f64 },
}

impl StepSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        match *self {
            StepSchedule::Constant { rate } => rate,
            StepSchedule::InverseTime { rate, decay } => rate / (1.0 + decay * iteration as f64),
        }
    }

    fn initial(&self) -> f64 {
        self.at(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub step: StepSchedule,
    pub optimizer: OptimizerKind,
    pub minibatch: usize,
    pub iterations: usize,
    /// Rescale the gradient to this norm when it is exceeded.
    pub grad_clip: Option<f64>,
    pub seed_label: String,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            step: StepSchedule::Constant { rate: 0.05 },
            optimizer: OptimizerKind::Sgd { momentum: 0.9 },
            minibatch: 32,
            iterations: 2000,
            grad_clip: Some(10.0),
            seed_label: "train".to_string(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.to_string()));
        if !(self.step.initial() > 0.0) {
            return bad("step size must be positive");
        }
        if let StepSchedule::InverseTime { decay, .. } = self.step {
            if decay < 0.0 {
                return bad("decay must be nonnegative");
            }
        }
        if self.minibatch == 0 {
            return bad("minibatch must be positive");
        }
        match self.optimizer {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                bad("momentum must lie in [0, 1)")
            }
            _ => Ok(()),
        }
    }
}

/// First-order optimizer state over the flat parameter layout.
#[derive(Debug, Clone)]
pub struct Optimizer<S> {
    kind: OptimizerKind,
    first: Vec<S>,
    second: Vec<S>,
    steps: usize,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind, net: &ReluNet<S>) -> Self {
        let n = net.flatten().len();
        Self { kind, first: vec![S::zero(); n], second: vec![S::zero(); n], steps: 0 }
    }

    /// One descent step of size `rate` along `grad`.
    pub fn apply(&mut self, net: &mut ReluNet<S>, grad: &Gradient<S>, rate: f64) {
        self.steps += 1;
        let g = grad.flatten();
        let mut params = net.flatten();
        let lr = S::lit(rate);
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                let mom = S::lit(momentum);
                for ((p, v), &gi) in params.iter_mut().zip(&mut self.first).zip(&g) {
                    *v = mom * *v + gi;
                    *p = *p - lr * *v;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let (b1, b2) = (S::lit(beta1), S::lit(beta2));
                let c1 = S::one() - S::lit(beta1.powi(self.steps as i32));
                let c2 = S::one() - S::lit(beta2.powi(self.steps as i32));
                let eps = S::lit(eps);
                for (((p, m), v), &gi) in
                    params.iter_mut().zip(&mut self.first).zip(&mut self.second).zip(&g)
                {
                    *m = b1 * *m + (S::one() - b1) * gi;
                    *v = b2 * *v + (S::one() - b2) * gi * gi;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *p = *p - lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
        net.load_flat(&params).expect("layout preserved");
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub net: ReluNet<S>,
    /// Minibatch loss, one entry per iteration.
    pub trace: Vec<S>,
    pub initial_loss: S,
    pub final_loss: S,
    /// True when the trained parameters did worse than the start and were discarded.
    pub reverted: bool,
}

/// Minibatch training on squared loss.
///
/// Deterministic given `rng` and `cfg.seed_label`. The returned net never has
/// a larger full-data loss than the input net: if training ends worse, the
/// starting parameters are returned with `reverted` set.
pub fn train<S: Scalar>(
    net: &ReluNet<S>,
    data: &[(Vec<S>, S)],
    cfg: &TrainerConfig,
    rng: &RngContract,
) -> Result<TrainOutcome<S>, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyData);
    }
    cfg.validate()?;
    if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != net.input_dim()) {
        return Err(NetError::DimensionMismatch { expected: net.input_dim(), found: x.len() });
    }
    let initial_loss = net.mse(data);
    if !initial_loss.is_finite() {
        return Err(NetError::NonFiniteLoss { iteration: 0 });
    }
    let mut current = net.clone();
    let mut opt = Optimizer::new(cfg.optimizer.clone(), &current);
    let mut stream = rng.derive_stream(&cfg.seed_label, 0);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let batch_len = cfg.minibatch.min(data.len());
    let mut picks = vec![0usize; batch_len];
    for iteration in 0..cfg.iterations {
        for p in picks.iter_mut() {
            *p = stream.random_range(0..data.len());
        }
        let mut grad = current.gradient(picks.iter().map(|&i| (data[i].0.as_slice(), data[i].1)));
        if !grad.loss.is_finite() {
            return Err(NetError::NonFiniteLoss { iteration });
        }
        if let Some(limit) = cfg.grad_clip {
            let norm = grad.norm();
            let limit = S::lit(limit);
            if norm > limit {
                grad.scale(limit / norm);
            }
        }
        trace.push(grad.loss);
        opt.apply(&mut current, &grad, cfg.step.at(iteration));
    }
    let final_loss = current.mse(data);
    if !final_loss.is_finite() {
        return Err(NetError::NonFiniteLoss { iteration: cfg.iterations });
    }
    if final_loss > initial_loss {
        return Ok(TrainOutcome {
            net: net.clone(),
            trace,
            initial_loss,
            final_loss: initial_loss,
            reverted: true,
        });
    }
    Ok(TrainOutcome { net: current, trace, initial_loss, final_loss, reverted: false })
}
