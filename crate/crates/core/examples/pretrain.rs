//! Pretrains the point embedding on base-class segmentation and saves it.
//!
//! ```text
//! cargo run --release --example pretrain -- [epochs] [checkpoint]
//! ```

use robust_fewshot::embed::{save_checkpoint, EmbeddingNet, NetConfig};
use robust_fewshot::harness::{pretrain, PretrainConfig};
use robust_fewshot::synth::{DatasetConfig, SyntheticDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(Ok(10), |s| s.parse())?;
    let ds = SyntheticDataset::generate(&DatasetConfig {
        train_scenes: 200,
        test_scenes: 20,
        ..DatasetConfig::default()
    })?;
    let mut net = EmbeddingNet::<f32>::new(NetConfig::default(), 0);
    let cfg = PretrainConfig {
        epochs,
        ..PretrainConfig::default()
    };
    let report = pretrain(&mut net, &ds.train, &ds.split, &cfg, 1)?;
    for (e, l) in report.epoch_losses.iter().enumerate() {
        println!("epoch {e:>3}  loss {l:.4}");
    }
    println!("held-out point accuracy {:.4}", report.holdout_accuracy);
    if let Some(path) = args.next() {
        save_checkpoint(path.as_ref(), &net, epochs as u64)?;
        println!("saved {path}");
    }
    Ok(())
}
