use dqlab::data::Dataset;
use dqlab::envs::{generate_dataset, Behavior, TabularMdp};
use dqlab::rng::RngContract;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jsonl_round_trip_is_bit_identical(
        states in 1usize..6,
        actions in 1usize..5,
        horizon in 1usize..5,
        m in 1usize..40,
        seed in any::<u64>(),
    ) {
        let mut rng = RngContract::new(seed).derive_stream("mdp", 0);
        let mdp = TabularMdp::random(states, actions, horizon, 0.3, &mut rng).unwrap();
        let data = generate_dataset(&mdp, &Behavior::Uniform, m, &RngContract::new(seed)).unwrap();
        let mut bytes = Vec::new();
        data.write_jsonl(&mut bytes).unwrap();
        let back = Dataset::read_jsonl(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &data);
        let mut again = Vec::new();
        back.write_jsonl(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

#[test]
fn uniform_behavior_covers_every_action() {
    let mdp = TabularMdp::benchmark(2);
    let data = generate_dataset(&mdp, &Behavior::Uniform, 10_000, &RngContract::new(2)).unwrap();
    let mu = data.spec.mu;
    for t in 0..data.spec.horizon {
        let mut counts = vec![0usize; data.spec.num_actions(t)];
        for i in 0..data.len() {
            counts[data.action_indices(i)[t]] += 1;
        }
        for c in counts {
            assert!(c as f64 / data.len() as f64 >= 1.0 / mu - 0.02);
        }
    }
}
