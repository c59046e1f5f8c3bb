//! Meta-testing a checkpoint on paired noisy episodes, with and without
//! noise suppression.
//!
//! ```text
//! cargo run --release --example meta_test -- [checkpoint] [episodes]
//! ```

use robust_fewshot::embed::{load_checkpoint, EmbeddingNet, NetConfig};
use robust_fewshot::harness::pipeline::{evaluate_variant, test_episodes};
use robust_fewshot::harness::ExperimentConfig;
use robust_fewshot::synth::{default_vocabulary, SyntheticDataset};
use robust_fewshot::NoiseConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let net: EmbeddingNet<f32> = match args.next() {
        Some(path) if path != "-" => load_checkpoint(path.as_ref())?.0,
        _ => EmbeddingNet::new(NetConfig::default(), 0),
    };
    let mut cfg = ExperimentConfig::default();
    cfg.eval.episodes = args.next().map_or(Ok(30), |s| s.parse())?;
    let ds = SyntheticDataset::generate_with(&cfg.data, default_vocabulary(), cfg.split.clone())?;
    for noise in [
        NoiseConfig::clean(),
        NoiseConfig::in_episode(0.4)?,
        NoiseConfig::out_episode(0.4)?,
    ] {
        let episodes = test_episodes(&ds, &cfg, noise)?;
        let plain = evaluate_variant(&net, &episodes, &cfg, false, "plain")?;
        let filtered = evaluate_variant(&net, &episodes, &cfg, true, "filtered")?;
        println!(
            "{:<16} mIoU {:5.2} -> {:5.2} with suppression; clean ratio {:.3} -> {:.3}",
            noise.label(),
            100.0 * plain.mean_miou,
            100.0 * filtered.mean_miou,
            filtered.clean_ratio_before,
            filtered.clean_ratio_after
        );
    }
    Ok(())
}
