//! Sweeps one ablation axis on a small run.
//!
//! ```text
//! cargo run --release --example ablation -- [r|mix|scales]
//! ```

use robust_fewshot::harness::pipeline::{fine_tuned, pretrained_net};
use robust_fewshot::harness::{ablate, ablation_table, AblationAxis, ExperimentConfig};
use robust_fewshot::synth::{default_vocabulary, SyntheticDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let axis: AblationAxis = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("scales")
        .parse()?;
    let mut cfg = ExperimentConfig::default();
    cfg.pretrain.epochs = 10;
    cfg.train.iterations = 100;
    cfg.eval.episodes = 30;
    let ds = SyntheticDataset::generate_with(&cfg.data, default_vocabulary(), cfg.split.clone())?;
    let (pre, _) = pretrained_net(&ds, &cfg)?;
    let (trained, _) = fine_tuned(&pre, &ds, &cfg, &cfg.loss)?;
    let rows = ablate(axis, &cfg, &ds, &pre, &trained)?;
    print!("{}", ablation_table(axis, &rows));
    Ok(())
}
