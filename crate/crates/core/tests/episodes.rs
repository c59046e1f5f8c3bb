mod common;

use robust_fewshot::synth::{
    test_episode, DatasetConfig, EpisodeSampler, SyntheticDataset, TRAINING_NOISE_MIX,
};
use robust_fewshot::types::NoiseKind;
use robust_fewshot::NoiseConfig;

#[test]
fn training_ratios_are_drawn_uniformly() {
    let sampler = EpisodeSampler::training(common::tiny_dataset());
    let mut counts = [0usize; 3];
    let total = 3000;
    for i in 0..total {
        let ep = sampler
            .training_episode(5, i, 2, 3, 1, &TRAINING_NOISE_MIX)
            .unwrap();
        let slot = TRAINING_NOISE_MIX
            .iter()
            .position(|&r| r == ep.noise.ratio)
            .unwrap();
        counts[slot] += 1;
        // 3 shots: 0.2 rounds to one noisy shot, 0.4 to one as well
        let noisy = ep.support[0].iter().filter(|s| !s.is_clean()).count();
        assert_eq!(noisy, ep.noise.noisy_count(3));
        if ep.noise.ratio > 0.0 {
            assert_eq!(ep.noise.kind, NoiseKind::Training);
        }
    }
    for c in counts {
        let f = c as f64 / total as f64;
        assert!((f - 1.0 / 3.0).abs() <= 0.03, "{counts:?}");
    }
}

#[test]
fn paired_test_episodes_share_classes_and_queries() {
    let ds = SyntheticDataset::generate(&DatasetConfig {
        points: 64,
        train_scenes: 10,
        test_scenes: 80,
        min_fg: 10,
        ..DatasetConfig::default()
    })
    .unwrap();
    let sampler = EpisodeSampler::testing(&ds);
    for i in 0..10 {
        let clean = test_episode(&sampler, 9, i, 2, 3, 1, NoiseConfig::clean()).unwrap();
        let noisy = test_episode(
            &sampler,
            9,
            i,
            2,
            3,
            1,
            NoiseConfig::in_episode(0.4).unwrap(),
        )
        .unwrap();
        assert_eq!(clean.classes, noisy.classes);
        assert_eq!(clean.queries, noisy.queries);
        let shot_classes = |e: &robust_fewshot::Episode| -> Vec<u32> {
            e.support.iter().flatten().map(|s| s.true_class).collect()
        };
        assert!(shot_classes(&clean)
            .iter()
            .zip(
                &clean
                    .classes
                    .iter()
                    .flat_map(|&c| [c; 3])
                    .collect::<Vec<_>>()
            )
            .all(|(a, b)| a == b));
        // in-episode noise on two ways: the noisy shots show the other way's class
        for (way, shots) in noisy.support.iter().enumerate() {
            for s in shots.iter().filter(|s| !s.is_clean()) {
                assert_eq!(s.true_class, noisy.classes[1 - way]);
                assert_eq!(s.declared_class, noisy.classes[way]);
            }
        }
    }
}
