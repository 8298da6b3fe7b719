use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetArchitecture, NetError};
use crate::scalar::{relu, Scalar};

/// `h(x) = clamp_M(a . h_L(x))` with `h_k = relu(W_k h_{k-1} + b_k)`.
///
/// Weights are stored row-major per layer. Masked entries are kept at zero
/// and never receive gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ReluNet<S> {
    pub arch: NetArchitecture<S>,
    pub weights: Vec<Vec<S>>,
    pub biases: Vec<Vec<S>>,
    pub output: Vec<S>,
}

/// Gradient with the same layout as [`ReluNet`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<S> {
    pub weights: Vec<Vec<S>>,
    pub biases: Vec<Vec<S>>,
    pub output: Vec<S>,
    /// Mean squared error of the batch the gradient was taken on.
    pub loss: S,
}

impl<S: Scalar> Gradient<S> {
    pub fn zeros_like(net: &ReluNet<S>) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![S::zero(); w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![S::zero(); b.len()]).collect(),
            output: vec![S::zero(); net.output.len()],
            loss: S::zero(),
        }
    }

    pub fn flatten(&self) -> Vec<S> {
        flatten_parts(&self.weights, &self.biases, &self.output)
    }

    pub fn norm(&self) -> S {
        self.flatten().iter().map(|&g| g * g).sum::<S>().sqrt()
    }

    pub fn scale(&mut self, factor: S) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g = *g * factor);
        }
        self.output.iter_mut().for_each(|g| *g = *g * factor);
    }
}

/// Reusable activation storage for allocation-free forward passes.
#[derive(Debug, Clone, Default)]
pub struct ForwardBuf<S> {
    /// Pre-activations per hidden layer.
    pre: Vec<Vec<S>>,
    /// Post-activations per hidden layer.
    post: Vec<Vec<S>>,
}

impl<S: Scalar> ForwardBuf<S> {
    pub fn for_net(net: &ReluNet<S>) -> Self {
        let pre: Vec<Vec<S>> = net.arch.widths.iter().map(|&w| vec![S::zero(); w]).collect();
        Self { post: pre.clone(), pre }
    }
}

fn flatten_parts<S: Copy>(w: &[Vec<S>], b: &[Vec<S>], a: &[S]) -> Vec<S> {
    let mut out = Vec::new();
    for layer in w {
        out.extend_from_slice(layer);
    }
    for layer in b {
        out.extend_from_slice(layer);
    }
    out.extend_from_slice(a);
    out
}

impl<S: Scalar> ReluNet<S> {
    /// All parameters zero.
    pub fn zeros(arch: NetArchitecture<S>) -> Self {
        let weights = (0..arch.depth())
            .map(|k| {
                let (r, c) = arch.layer_shape(k);
                vec![S::zero(); r * c]
            })
            .collect();
        let biases = arch.widths.iter().map(|&w| vec![S::zero(); w]).collect();
        let output = vec![S::zero(); arch.widths[arch.depth() - 1]];
        Self { arch, weights, biases, output }
    }

    /// Glorot-uniform weights in `+-sqrt(6/(d_in+d_out))`, zero biases.
    pub fn init_glorot<R: Rng + ?Sized>(arch: NetArchitecture<S>, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        for k in 0..net.arch.depth() {
            let (rows, cols) = net.arch.layer_shape(k);
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            for r in 0..rows {
                for c in 0..cols {
                    if net.arch.weight_allowed(k, r, c) {
                        net.weights[k][r * cols + c] = S::lit(rng.random_range(-limit..=limit));
                    }
                }
            }
        }
        let d_l = net.output.len();
        let limit = (6.0 / (d_l + 1) as f64).sqrt();
        for a in &mut net.output {
            *a = S::lit(rng.random_range(-limit..=limit));
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Flat parameter vector: weights per layer, biases per layer, output weights.
    /// Masked entries are included (as zeros).
    pub fn flatten(&self) -> Vec<S> {
        flatten_parts(&self.weights, &self.biases, &self.output)
    }

    pub fn load_flat(&mut self, flat: &[S]) -> Result<(), NetError> {
        let expected = self.flatten().len();
        if flat.len() != expected {
            return Err(NetError::DimensionMismatch { expected, found: flat.len() });
        }
        let mut it = flat.iter().copied();
        for layer in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for v in layer.iter_mut() {
                *v = it.next().expect("length checked");
            }
        }
        for v in &mut self.output {
            *v = it.next().expect("length checked");
        }
        self.enforce_mask();
        Ok(())
    }

    /// Zeroes every masked weight.
    pub fn enforce_mask(&mut self) {
        if self.arch.mask.is_none() {
            return;
        }
        for k in 0..self.arch.depth() {
            let (rows, cols) = self.arch.layer_shape(k);
            for r in 0..rows {
                for c in 0..cols {
                    if !self.arch.weight_allowed(k, r, c) {
                        self.weights[k][r * cols + c] = S::zero();
                    }
                }
            }
        }
    }

    fn check_input(&self, x: &[S]) -> Result<(), NetError> {
        if x.len() != self.arch.input_dim {
            return Err(NetError::DimensionMismatch { expected: self.arch.input_dim, found: x.len() });
        }
        Ok(())
    }

    /// Output before clamping; fills `buf`.
    pub fn forward_raw_with(&self, x: &[S], buf: &mut ForwardBuf<S>) -> S {
        debug_assert_eq!(x.len(), self.arch.input_dim);
        if buf.pre.len() != self.arch.depth() {
            *buf = ForwardBuf::for_net(self);
        }
        for k in 0..self.arch.depth() {
            let (rows, cols) = self.arch.layer_shape(k);
            let w = &self.weights[k];
            let b = &self.biases[k];
            let (done, rest) = buf.post.split_at_mut(k);
            let input: &[S] = if k == 0 { x } else { &done[k - 1] };
            let pre = &mut buf.pre[k];
            let post = &mut rest[0];
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                let z = row.iter().zip(input).fold(b[r], |acc, (&wi, &xi)| acc + wi * xi);
                pre[r] = z;
                post[r] = relu(z);
            }
        }
        let last = &buf.post[self.arch.depth() - 1];
        self.output.iter().zip(last).fold(S::zero(), |acc, (&a, &h)| acc + a * h)
    }

    fn clamp(&self, raw: S) -> S {
        let m = self.arch.clamp;
        raw.max(-m).min(m)
    }

    /// Clamped output reusing `buf`; no dimension check in release builds.
    pub fn forward_with(&self, x: &[S], buf: &mut ForwardBuf<S>) -> S {
        let raw = self.forward_raw_with(x, buf);
        self.clamp(raw)
    }

    /// Clamped output `h(x)`, in `[-M, M]`.
    pub fn forward(&self, x: &[S]) -> Result<S, NetError> {
        self.check_input(x)?;
        let mut buf = ForwardBuf::for_net(self);
        Ok(self.forward_with(x, &mut buf))
    }

    /// Output before clamping.
    pub fn forward_raw(&self, x: &[S]) -> Result<S, NetError> {
        self.check_input(x)?;
        let mut buf = ForwardBuf::for_net(self);
        Ok(self.forward_raw_with(x, &mut buf))
    }

    /// Smallest `|pre-activation|` over hidden units at `x`; used to keep
    /// finite-difference probes away from ReLU kinks.
    pub fn min_kink_distance(&self, x: &[S]) -> Result<S, NetError> {
        self.check_input(x)?;
        let mut buf = ForwardBuf::for_net(self);
        self.forward_raw_with(x, &mut buf);
        Ok(buf.pre.iter().flatten().fold(S::infinity(), |m, &z| m.min(z.abs())))
    }

    /// Mean squared error over `(x, y)` pairs.
    pub fn mse(&self, data: &[(Vec<S>, S)]) -> S {
        let mut buf = ForwardBuf::for_net(self);
        let total = data.iter().fold(S::zero(), |acc, (x, y)| {
            let e = self.forward_with(x, &mut buf) - *y;
            acc + e * e
        });
        total / S::from_usize_lossy(data.len().max(1))
    }

    /// Gradient of `(1/B) sum (h(x) - y)^2` over the batch. Saturated clamp and
    /// ReLU kinks use the zero subgradient.
    pub fn gradient<'a, I>(&self, batch: I) -> Gradient<S>
    where
        I: IntoIterator<Item = (&'a [S], S)>,
    {
        let mut grad = Gradient::zeros_like(self);
        let mut buf = ForwardBuf::for_net(self);
        let mut delta: Vec<Vec<S>> = self.arch.widths.iter().map(|&w| vec![S::zero(); w]).collect();
        let mut count = 0usize;
        let mut loss = S::zero();
        for (x, y) in batch {
            count += 1;
            let raw = self.forward_raw_with(x, &mut buf);
            let out = self.clamp(raw);
            let err = out - y;
            loss = loss + err * err;
            let m = self.arch.clamp;
            if raw > m || raw < -m {
                continue;
            }
            let g_out = S::lit(2.0) * err;
            self.accumulate(x, g_out, &buf, &mut delta, &mut grad);
        }
        if count > 0 {
            let inv = S::one() / S::from_usize_lossy(count);
            grad.scale(inv);
            grad.loss = loss * inv;
        }
        grad
    }

    fn accumulate(
        &self,
        x: &[S],
        g_out: S,
        buf: &ForwardBuf<S>,
        delta: &mut [Vec<S>],
        grad: &mut Gradient<S>,
    ) {
        let depth = self.arch.depth();
        let last = depth - 1;
        for (i, (&a, &h)) in self.output.iter().zip(&buf.post[last]).enumerate() {
            grad.output[i] = grad.output[i] + g_out * h;
            delta[last][i] = if buf.pre[last][i] > S::zero() { g_out * a } else { S::zero() };
        }
        for k in (0..depth).rev() {
            let (rows, cols) = self.arch.layer_shape(k);
            let input: &[S] = if k == 0 { x } else { &buf.post[k - 1] };
            let gw = &mut grad.weights[k];
            for r in 0..rows {
                let d = delta[k][r];
                if d == S::zero() {
                    continue;
                }
                grad.biases[k][r] = grad.biases[k][r] + d;
                let row = &mut gw[r * cols..(r + 1) * cols];
                for (g, &xi) in row.iter_mut().zip(input) {
                    *g = *g + d * xi;
                }
            }
            if k > 0 {
                let w = &self.weights[k];
                let (lower, upper) = delta.split_at_mut(k);
                let below = &mut lower[k - 1];
                let here = &upper[0];
                for c in 0..cols {
                    if buf.pre[k - 1][c] > S::zero() {
                        let mut acc = S::zero();
                        for r in 0..rows {
                            acc = acc + w[r * cols + c] * here[r];
                        }
                        below[c] = acc;
                    } else {
                        below[c] = S::zero();
                    }
                }
            }
        }
        if self.arch.mask.is_some() {
            for k in 0..depth {
                let (rows, cols) = self.arch.layer_shape(k);
                for r in 0..rows {
                    for c in 0..cols {
                        if !self.arch.weight_allowed(k, r, c) {
                            grad.weights[k][r * cols + c] = S::zero();
                        }
                    }
                }
            }
        }
    }

    /// Structured-text (JSON) document with architecture, mask and parameters.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let net: Self = serde_json::from_str(text).map_err(|e| NetError::Malformed(e.to_string()))?;
        net.arch.check()?;
        let shapes_ok = net.weights.len() == net.arch.depth()
            && net.biases.len() == net.arch.depth()
            && net.output.len() == net.arch.widths[net.arch.depth() - 1]
            && (0..net.arch.depth()).all(|k| {
                let (r, c) = net.arch.layer_shape(k);
                net.weights[k].len() == r * c && net.biases[k].len() == r
            });
        if !shapes_ok {
            return Err(NetError::Malformed("parameter shapes do not match architecture".into()));
        }
        Ok(net)
    }
}

/// Row-compressed copy of a net. Evaluation skips zero weights, which pays
/// off for masked constructions with thousands of mostly empty rows.
#[derive(Debug, Clone)]
pub struct SparseNet<S> {
    /// Per layer, per row: `(column, weight)` pairs.
    rows: Vec<Vec<Vec<(usize, S)>>>,
    biases: Vec<Vec<S>>,
    output: Vec<S>,
    clamp: S,
}

impl<S: Scalar> ReluNet<S> {
    pub fn compress(&self) -> SparseNet<S> {
        let rows = (0..self.arch.depth())
            .map(|k| {
                let (r, c) = self.arch.layer_shape(k);
                (0..r)
                    .map(|i| {
                        (0..c)
                            .filter_map(|j| {
                                let w = self.weights[k][i * c + j];
                                (w != S::zero()).then_some((j, w))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        SparseNet { rows, biases: self.biases.clone(), output: self.output.clone(), clamp: self.arch.clamp }
    }
}

impl<S: Scalar> SparseNet<S> {
    /// Clamped output; `buf` is scratch space reused across calls.
    pub fn eval(&self, x: &[S], buf: &mut Vec<Vec<S>>) -> S {
        buf.resize(self.rows.len(), Vec::new());
        for (k, layer) in self.rows.iter().enumerate() {
            let (done, rest) = buf.split_at_mut(k);
            let input: &[S] = if k == 0 { x } else { &done[k - 1] };
            let out = &mut rest[0];
            out.clear();
            out.extend(layer.iter().zip(&self.biases[k]).map(|(row, &b)| {
                relu(row.iter().fold(b, |acc, &(j, w)| acc + w * input[j]))
            }));
        }
        let last = buf.last().expect("net has a hidden layer");
        let raw = self.output.iter().zip(last).fold(S::zero(), |acc, (&a, &h)| acc + a * h);
        raw.max(-self.clamp).min(self.clamp)
    }
}
