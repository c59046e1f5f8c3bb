//! End-to-end runs: data, pretraining, episodic training of the baseline
//! and contrastive networks, and paired evaluation of every variant.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{streams, ExperimentConfig};
use super::evaluate::{meta_test, EvalSettings, MetricsReport};
use super::report::render_table;
use super::train::{episodic_train, pretrain, PretrainReport, TrainReport};
use crate::embed::{save_checkpoint, EmbeddingNet};
use crate::error::Result;
use crate::losses::LossConfig;
use crate::mdns::MdnsConfig;
use crate::synth::{test_episode, EpisodeSampler, SyntheticDataset};
use crate::types::{Episode, NoiseConfig};

/// A trained network paired with an inference setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub contrastive: bool,
    pub suppression: bool,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant {
            contrastive: false,
            suppression: false,
        },
        Variant {
            contrastive: true,
            suppression: false,
        },
        Variant {
            contrastive: false,
            suppression: true,
        },
        Variant {
            contrastive: true,
            suppression: true,
        },
    ];

    pub fn name(self) -> &'static str {
        match (self.contrastive, self.suppression) {
            (false, false) => "baseline",
            (true, false) => "ccns",
            (false, true) => "mdns",
            (true, true) => "ccns+mdns",
        }
    }
}

/// Paired test episodes for one noise setting.
pub fn test_episodes(
    ds: &SyntheticDataset,
    cfg: &ExperimentConfig,
    noise: NoiseConfig,
) -> Result<Vec<Episode>> {
    let sampler = EpisodeSampler::testing(ds);
    let e = cfg.episode;
    (0..cfg.eval.episodes as u64)
        .map(|i| {
            test_episode(
                &sampler,
                cfg.stage_seed(streams::TEST),
                i,
                e.n_way,
                e.k_shot,
                e.queries,
                noise,
            )
        })
        .collect()
}

pub fn settings(cfg: &ExperimentConfig, suppression: bool) -> EvalSettings {
    EvalSettings {
        propagation: cfg.propagation,
        mdns: suppression.then(|| cfg.mdns.clone()),
    }
}

/// Pretrains a fresh network on the base classes.
pub fn pretrained_net(
    ds: &SyntheticDataset,
    cfg: &ExperimentConfig,
) -> Result<(EmbeddingNet<f32>, PretrainReport)> {
    let mut net = EmbeddingNet::new(cfg.net, cfg.stage_seed(streams::NET_INIT));
    let report = pretrain(
        &mut net,
        &ds.train,
        &ds.split,
        &cfg.pretrain,
        cfg.stage_seed(streams::PRETRAIN),
    )?;
    Ok((net, report))
}

/// Episodic fine-tuning from `start` with the given loss.
pub fn fine_tuned(
    start: &EmbeddingNet<f32>,
    ds: &SyntheticDataset,
    cfg: &ExperimentConfig,
    loss: &LossConfig,
) -> Result<(EmbeddingNet<f32>, TrainReport)> {
    let mut net = start.clone();
    let sampler = EpisodeSampler::training(ds);
    let report = episodic_train(
        &mut net,
        &sampler,
        cfg.episode,
        loss,
        cfg.propagation.n_proto,
        &cfg.train,
        cfg.stage_seed(streams::TRAIN),
    )?;
    Ok((net, report))
}

/// Loss of the contrast-free baseline.
pub fn baseline_loss(cfg: &ExperimentConfig) -> LossConfig {
    LossConfig {
        lambda: 0.0,
        ..cfg.loss
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTimes {
    pub data_secs: f64,
    pub pretrain_secs: f64,
    pub train_secs: f64,
    pub eval_secs: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dataset: SyntheticDataset,
    pub pretrained: EmbeddingNet<f32>,
    pub baseline: EmbeddingNet<f32>,
    pub contrastive: EmbeddingNet<f32>,
    pub pretrain: PretrainReport,
    pub baseline_training: TrainReport,
    pub contrastive_training: TrainReport,
    /// One report per [`Variant::ALL`] entry, on the same episodes.
    pub reports: Vec<MetricsReport>,
    pub times: StageTimes,
}

impl PipelineOutput {
    pub fn report(&self, v: Variant) -> &MetricsReport {
        let i = Variant::ALL
            .iter()
            .position(|&x| x == v)
            .expect("known variant");
        &self.reports[i]
    }

    /// Text table of every variant.
    pub fn table(&self) -> String {
        let rows: Vec<(String, Vec<f64>)> = self
            .reports
            .iter()
            .map(|r| {
                (
                    r.variant.clone(),
                    vec![
                        r.mean_miou * 100.0,
                        r.mean_protonet_miou * 100.0,
                        r.clean_ratio_before,
                        r.clean_ratio_after,
                        r.mid_range_mass,
                    ],
                )
            })
            .collect();
        let noise = self
            .reports
            .first()
            .map_or(String::new(), |r| r.noise.label());
        render_table(
            &format!(
                "{} episodes, {noise}",
                self.reports.first().map_or(0, |r| r.episodes)
            ),
            &[
                "mIoU",
                "ProtoNet",
                "clean before",
                "clean after",
                "mid purity",
            ],
            &rows,
        )
    }
}

/// Evaluates `net` on `episodes` with or without suppression.
pub fn evaluate_variant(
    net: &EmbeddingNet<f32>,
    episodes: &[Episode],
    cfg: &ExperimentConfig,
    suppression: bool,
    name: &str,
) -> Result<MetricsReport> {
    let echo = serde_json::to_value(cfg)?;
    meta_test(net, episodes, &settings(cfg, suppression), name, echo)
}

/// Runs the whole pipeline. With `out`, writes data, checkpoints, metrics
/// JSON/CSV and the text table there.
pub fn run_pipeline(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PipelineOutput> {
    cfg.validate()?;
    let t0 = Instant::now();
    let dataset = SyntheticDataset::generate_with(
        &cfg.data,
        crate::synth::default_vocabulary(),
        cfg.split.clone(),
    )?;
    if let Some(dir) = out {
        dataset.write(&dir.join("data"))?;
    }
    let data_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let (pretrained, pretrain_report) = pretrained_net(&dataset, cfg)?;
    log::info!(
        "pretrain holdout accuracy {:.4}",
        pretrain_report.holdout_accuracy
    );
    let pretrain_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let (baseline, baseline_training) =
        fine_tuned(&pretrained, &dataset, cfg, &baseline_loss(cfg))?;
    let (contrastive, contrastive_training) = fine_tuned(&pretrained, &dataset, cfg, &cfg.loss)?;
    let train_secs = t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    let episodes = test_episodes(&dataset, cfg, cfg.noise)?;
    let reports = Variant::ALL
        .iter()
        .map(|v| {
            let net = if v.contrastive {
                &contrastive
            } else {
                &baseline
            };
            evaluate_variant(net, &episodes, cfg, v.suppression, v.name())
        })
        .collect::<Result<Vec<_>>>()?;
    let eval_secs = t3.elapsed().as_secs_f64();

    let output = PipelineOutput {
        dataset,
        pretrained,
        baseline,
        contrastive,
        pretrain: pretrain_report,
        baseline_training,
        contrastive_training,
        reports,
        times: StageTimes {
            data_secs,
            pretrain_secs,
            train_secs,
            eval_secs,
        },
    };
    if let Some(dir) = out {
        let ckpt = dir.join("checkpoints");
        std::fs::create_dir_all(&ckpt)?;
        save_checkpoint(&ckpt.join("pretrained.ckpt"), &output.pretrained, 0)?;
        save_checkpoint(
            &ckpt.join("baseline.ckpt"),
            &output.baseline,
            cfg.train.iterations as u64,
        )?;
        save_checkpoint(
            &ckpt.join("ccns.ckpt"),
            &output.contrastive,
            cfg.train.iterations as u64,
        )?;
        for r in &output.reports {
            r.write(&dir.join("metrics"), &r.variant.replace('+', "_"))?;
        }
        std::fs::write(dir.join("table.txt"), output.table())?;
        std::fs::write(
            dir.join("times.json"),
            serde_json::to_vec_pretty(&output.times)?,
        )?;
    }
    Ok(output)
}

/// Baseline reports at several noise settings on paired episodes.
pub fn noise_sweep(
    net: &EmbeddingNet<f32>,
    ds: &SyntheticDataset,
    cfg: &ExperimentConfig,
    noises: &[NoiseConfig],
    suppression: bool,
) -> Result<Vec<MetricsReport>> {
    noises
        .iter()
        .map(|&noise| {
            let episodes = test_episodes(ds, cfg, noise)?;
            evaluate_variant(net, &episodes, cfg, suppression, &noise.label())
        })
        .collect()
}

/// Suppression variant of `cfg` with other scales.
pub fn with_scales(cfg: &ExperimentConfig, mdns: MdnsConfig) -> ExperimentConfig {
    ExperimentConfig {
        mdns,
        ..cfg.clone()
    }
}
