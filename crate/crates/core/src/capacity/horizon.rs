use crate::scalar::Scalar;

/// `sum_{t=1}^T sum_{j=t}^T (3 mu)^{j-t}`, summed directly.
pub fn horizon_factor<S: Scalar>(horizon: usize, mu: S) -> S {
    let q = S::lit(3.0) * mu;
    let mut total = S::zero();
    for t in 1..=horizon {
        let mut w = S::one();
        for _ in t..=horizon {
            total = total + w;
            w = w * q;
        }
    }
    total
}

/// `T/(1-q) - q(1-q^T)/(1-q)^2` with `q = 3 mu`; equals [`horizon_factor`].
/// `None` at `q = 1`.
pub fn horizon_factor_closed<S: Scalar>(horizon: usize, mu: S) -> Option<S> {
    let q = S::lit(3.0) * mu;
    let one_minus = S::one() - q;
    if one_minus == S::zero() {
        return None;
    }
    let t = S::from_usize_lossy(horizon);
    let q_t = q.powi(horizon as i32);
    Some(t / one_minus - q * (S::one() - q_t) / (one_minus * one_minus))
}

/// `T/(1-q) - q(1-q^T)/(1-q)` as printed alongside the simplified bounds.
/// Kept for reporting; it does not equal the double sum.
pub fn horizon_factor_literal<S: Scalar>(horizon: usize, mu: S) -> Option<S> {
    let q = S::lit(3.0) * mu;
    let one_minus = S::one() - q;
    if one_minus == S::zero() {
        return None;
    }
    let t = S::from_usize_lossy(horizon);
    let q_t = q.powi(horizon as i32);
    Some(t / one_minus - q * (S::one() - q_t) / one_minus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases_by_hand() {
        assert_eq!(horizon_factor(1, 1.0), 1.0);
        // T = 2: (1 + q) + 1
        assert_eq!(horizon_factor(2, 1.0), 5.0);
        assert_eq!(horizon_factor(3, 2.0), 3.0 + 2.0 * 6.0 + 36.0);
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        for mu in [1.0f64, 2.0, 5.0] {
            for t in 1..=20 {
                let direct = horizon_factor(t, mu);
                let closed = horizon_factor_closed(t, mu).unwrap();
                assert!((closed - direct).abs() <= 1e-9 * direct, "T={t} mu={mu}: {closed} vs {direct}");
            }
        }
        assert!(horizon_factor_closed(4, 1.0 / 3.0).is_none());
    }

    #[test]
    fn printed_form_disagrees() {
        for mu in [1.0f64, 2.0, 5.0] {
            for t in 1..=20 {
                let direct = horizon_factor(t, mu);
                let literal = horizon_factor_literal(t, mu).unwrap();
                assert!((literal - direct).abs() > 1e-6 * direct, "T={t} mu={mu}");
            }
        }
    }
}
