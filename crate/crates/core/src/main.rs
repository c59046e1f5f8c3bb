//! Command-line front end. Every stage regenerates the synthetic data from
//! the config, so stages chain through the checkpoints in `<out>/checkpoints`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_fewshot::embed::{
    checkpoint::decode_f32, load_checkpoint, save_checkpoint, EmbeddingNet,
};
use robust_fewshot::harness::config::streams;
use robust_fewshot::harness::pipeline::{
    baseline_loss, evaluate_variant, fine_tuned, test_episodes,
};
use robust_fewshot::harness::{
    ablate, ablation_table, pretrain, render_table, AblationAxis, ExperimentConfig, Variant,
};
use robust_fewshot::mdns::FilterDescriptor;
use robust_fewshot::synth::{default_vocabulary, SyntheticDataset};
use robust_fewshot::{Error, Result};

#[derive(Parser)]
#[command(
    version,
    about = "Few-shot point cloud segmentation under noisy supports"
)]
struct Cli {
    /// TOML experiment config; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic train/test scenes and the split manifest.
    GenData,
    /// Pretrain the feature extractor on the base classes.
    Pretrain,
    /// Episodic training of the baseline and contrastive networks.
    Train,
    /// Evaluate every variant on paired test episodes.
    Eval,
    /// Filter one support set given features and a JSON descriptor.
    FilterDemo {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        descriptor: PathBuf,
    },
    /// Sweep components per shot (r), training-noise mix (mix) or scales.
    Ablate {
        #[arg(long, default_value = "r")]
        axis: String,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset(cfg: &ExperimentConfig) -> Result<SyntheticDataset> {
    SyntheticDataset::generate_with(&cfg.data, default_vocabulary(), cfg.split.clone())
}

fn checkpoint(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.out.join("checkpoints").join(format!("{name}.ckpt"))
}

fn load_net(path: &Path) -> Result<EmbeddingNet<f32>> {
    Ok(load_checkpoint(path)
        .map_err(|e| {
            Error::Config(format!(
                "{}: {e}; run the earlier stage first",
                path.display()
            ))
        })?
        .0)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::FilterDemo {
        features,
        descriptor,
    } = &cli.command
    {
        let desc: FilterDescriptor = serde_json::from_slice(&std::fs::read(descriptor)?)
            .map_err(|e| Error::Config(format!("{}: {e}", descriptor.display())))?;
        desc.config.validate()?;
        let result = desc.run(&decode_f32(&std::fs::read(features)?)?)?;
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        write_json(&out.join("filter_result.json"), &result)?;
        println!("retained shots {:?}", result.retained);
        return Ok(());
    }

    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.toml"), cfg.to_toml()?)?;
    let ds = dataset(&cfg)?;
    match &cli.command {
        Command::GenData => {
            let manifest = ds.write(&cfg.out.join("data"))?;
            println!(
                "{} train and {} test scenes",
                manifest.train_scenes, manifest.test_scenes
            );
        }
        Command::Pretrain => {
            let mut net = EmbeddingNet::new(cfg.net, cfg.stage_seed(streams::NET_INIT));
            let path = checkpoint(&cfg, "pretrained");
            std::fs::create_dir_all(path.parent().expect("has parent"))?;
            match pretrain(
                &mut net,
                &ds.train,
                &ds.split,
                &cfg.pretrain,
                cfg.stage_seed(streams::PRETRAIN),
            ) {
                Ok(report) => {
                    save_checkpoint(&path, &net, cfg.pretrain.epochs as u64)?;
                    write_json(&cfg.out.join("metrics/pretrain.json"), &report)?;
                    println!("holdout accuracy {:.4}", report.holdout_accuracy);
                }
                Err(e) => {
                    // keep the last finite weights for inspection
                    save_checkpoint(&path, &net, 0)?;
                    return Err(e);
                }
            }
        }
        Command::Train => {
            let pre = load_net(&checkpoint(&cfg, "pretrained"))?;
            for (name, loss) in [("baseline", baseline_loss(&cfg)), ("ccns", cfg.loss)] {
                let (net, report) = fine_tuned(&pre, &ds, &cfg, &loss)?;
                save_checkpoint(&checkpoint(&cfg, name), &net, cfg.train.iterations as u64)?;
                write_json(&cfg.out.join(format!("metrics/train_{name}.json")), &report)?;
                println!(
                    "{name}: final loss {:.4}",
                    report.losses.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Eval => {
            let baseline = load_net(&checkpoint(&cfg, "baseline"))?;
            let contrastive = load_net(&checkpoint(&cfg, "ccns"))?;
            let episodes = test_episodes(&ds, &cfg, cfg.noise)?;
            let mut rows = Vec::new();
            for v in Variant::ALL {
                let net = if v.contrastive {
                    &contrastive
                } else {
                    &baseline
                };
                let report = evaluate_variant(net, &episodes, &cfg, v.suppression, v.name())?;
                report.write(&cfg.out.join("metrics"), &v.name().replace('+', "_"))?;
                rows.push((
                    v.name().to_string(),
                    vec![report.mean_miou * 100.0, report.clean_ratio_after],
                ));
            }
            let table = render_table(&cfg.noise.label(), &["mIoU", "clean after"], &rows);
            std::fs::write(cfg.out.join("table.txt"), &table)?;
            print!("{table}");
        }
        Command::Ablate { axis } => {
            let axis: AblationAxis = axis.parse()?;
            let pre = load_net(&checkpoint(&cfg, "pretrained"))?;
            let trained = load_net(&checkpoint(&cfg, "ccns"))?;
            let rows = ablate(axis, &cfg, &ds, &pre, &trained)?;
            let table = ablation_table(axis, &rows);
            write_json(
                &cfg.out
                    .join(format!("metrics/ablation_{axis:?}.json").to_lowercase()),
                &rows,
            )?;
            print!("{table}");
        }
        Command::FilterDemo { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
