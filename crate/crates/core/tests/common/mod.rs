//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_fewshot::embed::{EmbeddingNet, NetConfig};
use robust_fewshot::harness::episode_objective;
use robust_fewshot::losses::LossConfig;
use robust_fewshot::synth::{DatasetConfig, EpisodeSampler, SyntheticDataset};
use robust_fewshot::{Episode, NoiseConfig};

/// Small scenes of 64 points for finite-difference checks.
pub fn tiny_dataset() -> &'static SyntheticDataset {
    static DS: OnceLock<SyntheticDataset> = OnceLock::new();
    DS.get_or_init(|| {
        SyntheticDataset::generate(&DatasetConfig {
            points: 64,
            train_scenes: 60,
            test_scenes: 10,
            min_objects: 2,
            max_objects: 3,
            min_fg: 10,
            seed: 11,
        })
        .expect("tiny dataset")
    })
}

/// A 2-way 3-shot episode with one noisy shot per way.
pub fn tiny_episode(seed: u64) -> Episode {
    let ds = tiny_dataset();
    let sampler = EpisodeSampler::training(ds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sampler
        .sample_episode(None, 2, 3, 1, NoiseConfig::training(0.4).unwrap(), &mut rng)
        .expect("tiny episode")
}

/// Random weights and random biases: zero biases would park every point
/// whose first-layer units are all off exactly on a second-layer kink.
pub fn tiny_net(seed: u64) -> EmbeddingNet<f64> {
    let mut net = EmbeddingNet::new(
        NetConfig {
            hidden: 8,
            feature_dim: 8,
            projection_dim: 8,
            ..NetConfig::default()
        },
        seed,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for layer in &mut net.params.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    net
}

/// Every discrete branch the network takes on an episode: ReLU signs and
/// max-pool winners.
fn activation_pattern(net: &EmbeddingNet<f64>, ep: &Episode) -> Vec<usize> {
    let mut out = Vec::new();
    for cloud in ep
        .support
        .iter()
        .flatten()
        .map(|s| &s.cloud)
        .chain(&ep.queries)
    {
        let f = net.forward_cloud(cloud).unwrap();
        for m in [&f.h1, &f.h2, &f.features] {
            out.extend(m.iter().map(|&v| usize::from(v > 0.0)));
        }
        out.extend(&f.pool_argmax);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub parameters: usize,
    /// Coordinates where the step had to shrink to stay off a kink.
    pub shrunk: usize,
}

/// Central finite differences of `ce + lambda * ccns` against the analytic
/// gradient, with every discrete choice held fixed. The step starts at
/// 1e-4 and shrinks tenfold while a perturbation flips an activation.
pub fn gradient_check(seed: u64, components: usize) -> GradCheck {
    let ep = tiny_episode(seed);
    let mut net = tiny_net(seed);
    let loss = LossConfig {
        tau: 0.1,
        lambda: 0.1,
        components,
    };
    let n_proto = 3;
    let base = episode_objective(&net, &ep, &loss, n_proto, None).unwrap();
    let analytic = base.grads.flatten();
    let pattern = activation_pattern(&net, &ep);

    // coordinates far below the largest one are compared on its scale, where
    // the difference quotient's own rounding noise stops dominating
    let floor = 1e-6
        * analytic
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()))
            .max(1e-12);
    let mut max_rel_err: f64 = 0.0;
    let mut shrunk = 0;
    for i in 0..analytic.len() {
        let theta = net.params.get(i);
        let mut h = 1e-4;
        let fd = loop {
            net.params.set(i, theta + h);
            let same_plus = activation_pattern(&net, &ep) == pattern;
            let plus = episode_objective(&net, &ep, &loss, n_proto, Some(&base.partitions))
                .unwrap()
                .loss;
            net.params.set(i, theta - h);
            let same_minus = activation_pattern(&net, &ep) == pattern;
            let minus = episode_objective(&net, &ep, &loss, n_proto, Some(&base.partitions))
                .unwrap()
                .loss;
            net.params.set(i, theta);
            if (same_plus && same_minus) || h < 1e-9 {
                break (plus - minus) / (2.0 * h);
            }
            h /= 10.0;
        };
        if h < 1e-4 {
            shrunk += 1;
        }
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(floor);
        max_rel_err = max_rel_err.max(rel);
    }
    GradCheck {
        max_rel_err,
        parameters: analytic.len(),
        shrunk,
    }
}
