use dqlab::approx::{build_indicator_net, CubicPartition};
use dqlab::harness::{run_approx_certify, ExperimentConfig, HALVING_RANGE};
use dqlab::rng::RngContract;
use proptest::prelude::*;
use rand::Rng;

fn inside(bounds: &[(f64, f64)], x: &[f64], margin: f64) -> bool {
    bounds.iter().zip(x).all(|(&(a, b), &v)| v >= a + margin && v <= b - margin)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn indicator_range_and_support(d in 1usize..4, n in 1usize..5, pick in any::<u64>(), frac in 0.05f64..0.45, seed in any::<u64>()) {
        let partition = CubicPartition::new(d, n);
        let cube = (pick % partition.num_cubes() as u64) as usize;
        let tau = frac / n as f64;
        let net = build_indicator_net(&partition, cube, tau).unwrap();
        let bounds: Vec<(f64, f64)> = partition.bounds(cube);
        let mut rng = RngContract::new(seed).derive_stream("probe", 0);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let g = net.forward(&x).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&g));
            // the four ramp units cancel past the right edge only up to rounding
            if !inside(&bounds, &x, 0.0) {
                prop_assert!(g.abs() <= 1e-12, "{g}");
            }
            if inside(&bounds, &x, tau) {
                prop_assert!((g - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distinct_indicators_never_overlap(d in 1usize..4, n in 2usize..5, i in any::<u64>(), j in any::<u64>(), seed in any::<u64>()) {
        let partition = CubicPartition::new(d, n);
        let cubes = partition.num_cubes() as u64;
        let (a, b) = ((i % cubes) as usize, (j % cubes) as usize);
        prop_assume!(a != b);
        let tau = 0.2 / n as f64;
        let ga = build_indicator_net(&partition, a, tau).unwrap();
        let gb = build_indicator_net(&partition, b, tau).unwrap();
        let mut rng = RngContract::new(seed).derive_stream("probe", 0);
        // probe near cube a's centre as well as uniformly
        let centre: Vec<f64> = partition.center(a);
        for k in 0..2000 {
            let x: Vec<f64> = if k % 2 == 0 {
                (0..d).map(|_| rng.random::<f64>()).collect()
            } else {
                centre.iter().map(|c| (c + rng.random_range(-1.0..1.0) / n as f64).clamp(0.0, 1.0)).collect()
            };
            prop_assert!((ga.forward(&x).unwrap() * gb.forward(&x).unwrap()).abs() <= 1e-12);
        }
    }
}

#[test]
fn small_certification_suite_passes_with_linear_tau_scaling() {
    let cfg = ExperimentConfig::parse(
        r#"
kind = "approx-certify"
seed = 11

[approx]
dims = [1, 2]
resolutions = [1, 2, 3]
specs_per_cell = 3
reference_cell = false
"#,
    )
    .unwrap();
    let report = run_approx_certify(&cfg).unwrap();
    assert!(!report.rows.is_empty());
    for r in &report.rows {
        assert!(r.pass, "{r:?}");
        assert!(r.measured <= r.bound * (1.0 + 1e-12));
    }
    assert!(!report.halving.is_empty());
    for h in &report.halving {
        assert!((HALVING_RANGE.0..=HALVING_RANGE.1).contains(&h.ratio), "{h:?}");
    }
    let again = run_approx_certify(&cfg).unwrap();
    assert_eq!(again.rows, report.rows);
}
