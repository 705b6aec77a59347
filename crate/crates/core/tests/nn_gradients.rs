mod common;

use proptest::prelude::*;
use rand::Rng;

use fedjudge::gradfeat::features_from_trace;
use fedjudge::nn::{self, LabeledDataset, TrainConfig};
use fedjudge::sim::{make_datasets, poison_labels, AttackMode, ExperimentConfig};

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..20 {
        let err = common::gradient_check(seed);
        assert!(err <= 1e-4, "seed {seed}: relative error {err:e}");
    }
}

fn dataset(seed: u64, n: usize, dim: usize) -> LabeledDataset {
    let mut r = common::rng(seed);
    let samples = (0..n)
        .map(|i| nn::Sample {
            id: i as u64,
            features: (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect(),
            label: (i % 2) as u8,
        })
        .collect();
    LabeledDataset::new("props", samples).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn observing_leaves_the_model_untouched(seed in any::<u64>(), n in 1usize..40, bs in 1usize..10) {
        let (arch, model, _) = common::random_problem(seed);
        let data = dataset(seed, n, arch.input_dim);
        let before = model.to_bytes();
        let a = nn::observe_gradients(&arch, &model, &data, bs, seed).unwrap();
        let b = nn::observe_gradients(&arch, &model, &data, bs, seed).unwrap();
        prop_assert_eq!(model.to_bytes(), before);
        prop_assert_eq!(a.len(), n.div_ceil(bs));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn training_is_reproducible(seed in any::<u64>(), n in 1usize..30) {
        let (arch, model, _) = common::random_problem(seed);
        let data = dataset(seed ^ 1, n, arch.input_dim);
        let cfg = TrainConfig { epochs: 2, learning_rate: 1e-2, seed, ..TrainConfig::default() };
        let a = nn::train(&arch, &model, &data, &cfg).unwrap();
        let b = nn::train(&arch, &model, &data, &cfg).unwrap();
        prop_assert_eq!(a.0.to_bytes(), b.0.to_bytes());
        prop_assert_eq!(a.1, b.1);
    }
}

#[test]
fn poisoned_training_changes_the_feature() {
    let cfg = ExperimentConfig::default();
    let data = make_datasets(&cfg, 1).unwrap();
    let arch = nn::Architecture::new(cfg.data.dim, cfg.hidden.clone()).unwrap();
    let m0 = nn::init_model(&arch, 1).unwrap();
    let client = &data.clients[0];
    let poisoned = poison_labels(client, cfg.flip_fraction, AttackMode::Targeted, 2).unwrap();
    let train = |d: &LabeledDataset| {
        let (_, trace) = nn::train(&arch, &m0, d, &cfg.local_train).unwrap();
        features_from_trace(&trace).unwrap()
    };
    let clean = train(client);
    let dirty = train(&poisoned);
    assert!(clean.values().iter().zip(dirty.values()).any(|(a, b)| a != b));
}
