use super::{ApproxError, CubicPartition, PiecewiseConstantSpec};
use crate::nets::{LayerMask, NetArchitecture, ReluNet};
use crate::scalar::{relu, Scalar};

/// One-dimensional bump: 0 outside `[a, b]`, 1 on `[a+tau, b-tau]`, linear
/// ramps in between. Realized by four ReLUs:
/// `(1/tau)[s(x-a) - s(x-a-tau) - s(x-b+tau) + s(x-b)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidGadget<S> {
    pub a: S,
    pub b: S,
    pub tau: S,
}

impl<S: Scalar> TrapezoidGadget<S> {
    pub fn new(a: S, b: S, tau: S) -> Result<Self, ApproxError> {
        let half = (b - a) / S::lit(2.0);
        if !(tau > S::zero() && tau < half) {
            return Err(ApproxError::TauOutOfRange { tau: tau.as_f64(), limit: half.as_f64() });
        }
        Ok(Self { a, b, tau })
    }

    /// Offsets subtracted from `x` by the four units, with their signs.
    fn units(&self) -> [(S, S); 4] {
        let one = S::one();
        [
            (self.a, one),
            (self.a + self.tau, -one),
            (self.b - self.tau, -one),
            (self.b, one),
        ]
    }

    pub fn value(&self, x: S) -> S {
        let sum = self
            .units()
            .iter()
            .fold(S::zero(), |acc, &(off, sign)| acc + sign * relu(x - off));
        sum / self.tau
    }
}

/// `2 d C0 s tau N^{1-d}`.
pub fn band_l1_bound(d: usize, c0: f64, s: usize, tau: f64, n: usize) -> f64 {
    2.0 * d as f64 * c0 * s as f64 * tau * (n as f64).powi(1 - d as i32)
}

/// `C0 (2 d s tau N^{1-d})^{1/p}`: the `L^p` norm of height `C0` on the
/// union of ramp frames.
pub fn geometric_band_bound(d: usize, c0: f64, s: usize, tau: f64, n: usize, p: f64) -> f64 {
    let measure = 2.0 * d as f64 * s as f64 * tau * (n as f64).powi(1 - d as i32);
    c0 * measure.powf(1.0 / p)
}

fn check_tau<S: Scalar>(partition: &CubicPartition, tau: S) -> Result<(), ApproxError> {
    let limit = 1.0 / (2.0 * partition.resolution as f64);
    if !(tau > S::zero() && tau.as_f64() < limit) {
        return Err(ApproxError::TauOutOfRange { tau: tau.as_f64(), limit });
    }
    Ok(())
}

/// Writes the `4d` trapezoid units of `cube` into rows `row0..row0+4d` of the
/// first layer and returns the per-unit second-layer weights.
fn write_first_layer<S: Scalar>(
    partition: &CubicPartition,
    cube: usize,
    tau: S,
    row0: usize,
    w1: &mut [S],
    b1: &mut [S],
    mask1: &mut LayerMask,
) -> Result<Vec<S>, ApproxError> {
    let d = partition.dim;
    let mut second = Vec::with_capacity(4 * d);
    for (k, (a, b)) in partition.bounds::<S>(cube).into_iter().enumerate() {
        let gadget = TrapezoidGadget::new(a, b, tau)?;
        for (u, (offset, sign)) in gadget.units().into_iter().enumerate() {
            let row = row0 + 4 * k + u;
            w1[row * d + k] = S::one();
            mask1.allow(row, k);
            b1[row] = -offset;
            second.push(sign / tau);
        }
    }
    Ok(second)
}

/// Two-hidden-layer net equal to 1 on the cube shrunk by `tau`, 0 outside the
/// cube and in `[0, 1]` on the ramp band.
///
/// Layer 1 holds `d` trapezoid gadgets (`4d` units), layer 2 the single unit
/// `relu(sum_k t_k(x_k) - (d - 1))`.
pub fn build_indicator_net<S: Scalar>(
    partition: &CubicPartition,
    cube: usize,
    tau: S,
) -> Result<ReluNet<S>, ApproxError> {
    check_tau(partition, tau)?;
    if cube >= partition.num_cubes() {
        return Err(ApproxError::InvalidTarget(format!("cube {cube} outside partition")));
    }
    let spec = PiecewiseConstantSpec::new(*partition, vec![cube], vec![S::one()], S::one())?;
    approximate_piecewise_constant(&spec, tau)
}

/// `sum_{j in Lambda_s} c_j g_j` with `g_j` the cube indicator nets, packed
/// into one sparsely connected net with widths `(4ds, s)` and clamp `C0`.
/// An empty support yields the zero net.
pub fn approximate_piecewise_constant<S: Scalar>(
    spec: &PiecewiseConstantSpec<S>,
    tau: S,
) -> Result<ReluNet<S>, ApproxError> {
    check_tau(&spec.partition, tau)?;
    spec.check()?;
    let d = spec.dim();
    let s = spec.sparsity();
    if s == 0 {
        let arch = NetArchitecture::dense(d, vec![1, 1], spec.bound)?;
        return Ok(ReluNet::zeros(arch));
    }
    let first = 4 * d * s;
    let mut mask1 = LayerMask::empty(first, d);
    let mut mask2 = LayerMask::empty(s, first);
    let mut w1 = vec![S::zero(); first * d];
    let mut b1 = vec![S::zero(); first];
    let mut w2 = vec![S::zero(); s * first];
    let mut b2 = vec![S::zero(); s];
    let threshold = S::from_usize_lossy(d - 1);
    for (i, &cube) in spec.support.iter().enumerate() {
        let row0 = 4 * d * i;
        let second =
            write_first_layer(&spec.partition, cube, tau, row0, &mut w1, &mut b1, &mut mask1)?;
        for (u, w) in second.into_iter().enumerate() {
            w2[i * first + row0 + u] = w;
            mask2.allow(i, row0 + u);
        }
        b2[i] = -threshold;
    }
    let arch = NetArchitecture::masked(d, vec![first, s], vec![mask1, mask2], spec.bound)?;
    Ok(ReluNet { arch, weights: vec![w1, w2], biases: vec![b1, b2], output: spec.values.clone() })
}

/// Pads a two-hidden-layer construction with identity layers up to `depth`.
/// Exact because the second-layer outputs are nonnegative.
pub fn embed_in_depth<S: Scalar>(net: &ReluNet<S>, depth: usize) -> Result<ReluNet<S>, ApproxError> {
    let base = net.arch.depth();
    if depth <= base {
        return Ok(net.clone());
    }
    let width = net.arch.widths[base - 1];
    let mut widths = net.arch.widths.clone();
    let mut masks = match &net.arch.mask {
        Some(m) => m.clone(),
        None => (0..base)
            .map(|k| {
                let (r, c) = net.arch.layer_shape(k);
                LayerMask::dense(r, c)
            })
            .collect(),
    };
    let mut weights = net.weights.clone();
    let mut biases = net.biases.clone();
    for _ in base..depth {
        widths.push(width);
        let mut mask = LayerMask::empty(width, width);
        let mut w = vec![S::zero(); width * width];
        for i in 0..width {
            mask.allow(i, i);
            w[i * width + i] = S::one();
        }
        masks.push(mask);
        weights.push(w);
        biases.push(vec![S::zero(); width]);
    }
    let arch = NetArchitecture::masked(net.arch.input_dim, widths, masks, net.arch.clamp)?;
    Ok(ReluNet { arch, weights, biases, output: net.output.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_shape() {
        let g = TrapezoidGadget::new(0.0f64, 0.5, 0.1).unwrap();
        assert_eq!(g.value(-0.2), 0.0);
        assert_eq!(g.value(0.0), 0.0);
        assert!((g.value(0.05) - 0.5).abs() < 1e-12);
        assert!((g.value(0.25) - 1.0).abs() < 1e-12);
        assert!((g.value(0.45) - 0.5).abs() < 1e-12);
        assert_eq!(g.value(0.5), 0.0);
        assert_eq!(g.value(0.9), 0.0);
        assert!(TrapezoidGadget::new(0.0, 0.5, 0.25).is_err());
        assert!(TrapezoidGadget::new(0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn indicator_hand_values() {
        let p = CubicPartition::new(2, 2);
        let net = build_indicator_net(&p, 0, 0.1f64).unwrap();
        assert!((net.forward(&[0.25, 0.25]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(net.forward(&[0.9, 0.9]).unwrap(), 0.0);
        assert!((net.forward(&[0.05, 0.25]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(net.arch.depth(), 2);
        assert_eq!(net.arch.widths, vec![8, 1]);
    }

    #[test]
    fn tau_range_enforced() {
        let p = CubicPartition::new(2, 6);
        assert!(matches!(
            build_indicator_net(&p, 0, 0.1f64),
            Err(ApproxError::TauOutOfRange { .. })
        ));
        assert!(build_indicator_net(&p, 0, -0.01f64).is_err());
        assert!(build_indicator_net(&p, 0, 0.08f64).is_ok());
    }

    #[test]
    fn empty_support_gives_zero_net() {
        let spec = PiecewiseConstantSpec::new(CubicPartition::new(2, 3), vec![], vec![], 1.0).unwrap();
        let net = approximate_piecewise_constant(&spec, 0.01).unwrap();
        assert!(net.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_count_is_linear_in_support() {
        let p = CubicPartition::new(3, 4);
        let spec = PiecewiseConstantSpec::new(p, vec![0, 5, 9], vec![1.0, -0.5, 0.25], 1.0).unwrap();
        let net = approximate_piecewise_constant(&spec, 0.01).unwrap();
        let (d, s) = (3, 3);
        // 4ds first-layer weights and biases, 4ds second-layer weights, s biases, s outputs
        assert_eq!(net.param_count(), s * (12 * d + 2));
        assert_eq!(net.arch.d_max(), 4 * d * s);
    }

    #[test]
    fn embedding_preserves_values() {
        let p = CubicPartition::new(2, 3);
        let spec = PiecewiseConstantSpec::new(p, vec![1, 4], vec![0.7, -0.3], 1.0).unwrap();
        let net = approximate_piecewise_constant(&spec, 0.02).unwrap();
        let deep = embed_in_depth(&net, 6).unwrap();
        assert_eq!(deep.arch.depth(), 6);
        for x in [[0.5, 0.5], [0.1, 0.45], [0.35, 0.5], [0.9, 0.1]] {
            assert_eq!(net.forward(&x).unwrap(), deep.forward(&x).unwrap());
        }
    }

    #[test]
    fn bound_arithmetic() {
        assert!((band_l1_bound(2, 1.0, 4, 0.01, 6) - 0.16 / 6.0).abs() < 1e-15);
        assert!((band_l1_bound(2, 1.0, 1, 0.05, 1) - 0.2).abs() < 1e-15);
        assert_eq!(geometric_band_bound(2, 1.0, 1, 0.05, 1, 1.0), band_l1_bound(2, 1.0, 1, 0.05, 1));
    }
}
