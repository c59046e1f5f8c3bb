//! Episodic fine-tuning on noisy base-class episodes, with and without the
//! component-level contrastive term.
//!
//! ```text
//! cargo run --release --example episodic_train -- [iterations]
//! ```

use robust_fewshot::embed::{EmbeddingNet, NetConfig};
use robust_fewshot::harness::{episodic_train, EpisodeShape, TrainConfig};
use robust_fewshot::losses::LossConfig;
use robust_fewshot::synth::{DatasetConfig, EpisodeSampler, SyntheticDataset};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations = std::env::args().nth(1).map_or(Ok(200), |s| s.parse())?;
    let ds = SyntheticDataset::generate(&DatasetConfig {
        train_scenes: 200,
        test_scenes: 20,
        ..DatasetConfig::default()
    })?;
    let sampler = EpisodeSampler::training(&ds);
    let start = EmbeddingNet::<f32>::new(NetConfig::default(), 0);
    let cfg = TrainConfig {
        iterations,
        ..TrainConfig::default()
    };
    for lambda in [0.0, 0.1] {
        let mut net = start.clone();
        let loss = LossConfig {
            lambda,
            ..LossConfig::default()
        };
        let r = episodic_train(
            &mut net,
            &sampler,
            EpisodeShape::default(),
            &loss,
            10,
            &cfg,
            5,
        )?;
        let q = (iterations / 4).max(1);
        println!(
            "lambda {lambda}: ce first quarter {:.4}, last quarter {:.4}; contrastive {:.4} -> {:.4}",
            mean(&r.ce[..q]),
            mean(&r.ce[r.ce.len() - q..]),
            mean(&r.ccns[..q]),
            mean(&r.ccns[r.ccns.len() - q..]),
        );
    }
    Ok(())
}
