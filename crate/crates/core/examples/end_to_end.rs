//! Full run: generate data, pretrain, fine-tune the baseline and the
//! contrastive network, then evaluate all four variants on paired episodes.
//!
//! ```text
//! cargo run --release --example end_to_end -- [config.toml] [out_dir]
//! ```

use std::path::PathBuf;

use robust_fewshot::harness::{run_pipeline, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::default(),
    };
    let out = args.next().map(PathBuf::from);
    let run = run_pipeline(&cfg, out.as_deref())?;
    println!(
        "pretrain holdout accuracy: {:.4}",
        run.pretrain.holdout_accuracy
    );
    println!("{}", run.table());
    println!(
        "times: data {:.1}s, pretrain {:.1}s, train {:.1}s, eval {:.1}s",
        run.times.data_secs, run.times.pretrain_secs, run.times.train_secs, run.times.eval_secs
    );
    Ok(())
}
