use dqlab::capacity::{
    param_count_bound, covering_bound_deep, covering_bound_linear_shallow, generalization_bound_constant,
    generalization_bound_smooth, oracle_bound, BoundInputs, StageInputs,
};
use proptest::prelude::*;

fn inputs(m: u64, horizon: usize, mu: f64, n_cells: usize, d_tilde: usize, s: usize) -> BoundInputs<f64> {
    BoundInputs::uniform(m, horizon, mu, StageInputs { n_cells, d_tilde, s, k: 3, approx_error: 0.01, ..Default::default() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bounds_nonincreasing_in_m(m in 3u64..1_000_000, extra in 1u64..1_000_000, t in 1usize..6, mu in 1.0f64..4.0, n in 1usize..8, d in 1usize..4) {
        let a = inputs(m, t, mu, n, d, 2);
        let b = inputs(m + extra, t, mu, n, d, 2);
        prop_assert!(generalization_bound_constant(&b).unwrap().general.value <= generalization_bound_constant(&a).unwrap().general.value);
        prop_assert!(generalization_bound_smooth(&b).unwrap().general.value <= generalization_bound_smooth(&a).unwrap().general.value * (1.0 + 1e-12));
        prop_assert!(param_count_bound(&b).unwrap().value <= param_count_bound(&a).unwrap().value);
    }

    #[test]
    fn bounds_nondecreasing_in_mu_horizon_and_sparsity(m in 3u64..1_000_000, t in 1usize..6, mu in 1.0f64..4.0, dmu in 0.0f64..2.0, n in 1usize..8, s in 1usize..10) {
        let base = inputs(m, t, mu, n, 2, s);
        let more_mu = inputs(m, t, mu + dmu, n, 2, s);
        let longer = inputs(m, t + 1, mu, n, 2, s);
        let sparser = inputs(m, t, mu, n, 2, s + 1);
        let c = |i: &BoundInputs<f64>| generalization_bound_constant(i).unwrap().general.value;
        let sm = |i: &BoundInputs<f64>| generalization_bound_smooth(i).unwrap().general.value;
        prop_assert!(c(&more_mu) >= c(&base));
        prop_assert!(c(&longer) >= c(&base));
        prop_assert!(sm(&more_mu) >= sm(&base));
        prop_assert!(sm(&longer) >= sm(&base));
        prop_assert!(sm(&sparser) >= sm(&base));
    }

    #[test]
    fn oracle_nondecreasing_in_covering(t in 1usize..5, logs in prop::collection::vec(0.0f64..50.0, 5), bump in 0.0f64..10.0, k in 0usize..5) {
        let mut i = inputs(1000, t, 1.5, 4, 2, 1);
        for st in &mut i.stages {
            st.beta = 0.001;
        }
        let logs = &logs[..t];
        let mut more = logs.to_vec();
        more[k % t] += bump;
        let a = oracle_bound(&i, logs).unwrap();
        let b = oracle_bound(&i, &more).unwrap();
        prop_assert!(b.value >= a.value);
        prop_assert_eq!(oracle_bound(&i, logs).unwrap(), a);
    }

    #[test]
    fn covering_bounds_scale_and_order(k in 1usize..100, n in 1usize..1000, depth in 1usize..6, dmax in 2usize..100, eps in 0.001f64..1.0) {
        let lin = covering_bound_linear_shallow(k, 2.0, eps, 1.0).unwrap();
        prop_assert_eq!(covering_bound_linear_shallow(2 * k, 2.0, eps, 1.0).unwrap(), 2.0 * lin);
        prop_assert!(covering_bound_linear_shallow(k, 2.0, eps / 2.0, 1.0).unwrap() > lin);
        let deep = covering_bound_deep(n, depth, dmax, 2.0, eps, 1.0).unwrap();
        prop_assert!((covering_bound_deep(n, 2 * depth, dmax, 2.0, eps, 1.0).unwrap() - 2.0 * deep).abs() <= 1e-12 * deep);
        prop_assert!(covering_bound_deep(n, depth, dmax, 2.0, 2.0, 1.0).is_err());
    }
}
