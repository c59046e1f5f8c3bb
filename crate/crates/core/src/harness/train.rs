use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::objective::episode_objective;
use crate::embed::{Adam, EmbeddingNet, Layer};
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, LossConfig};
use crate::synth::episodes::TRAINING_NOISE_MIX;
use crate::synth::{episode_rng, DatasetSplit, EpisodeSampler, Scene};
use crate::types::ClassId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Scenes per optimizer step.
    pub batch: usize,
    /// Fraction of the training pool held out for the accuracy gate.
    pub holdout: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch: 8,
            holdout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epoch_losses: Vec<f64>,
    /// Per-point accuracy on the held-out base scenes.
    pub holdout_accuracy: f64,
}

/// Classifier target of a dataset label: its position among the base
/// classes plus one, or 0 for anything else.
fn base_target(label: ClassId, split: &DatasetSplit) -> usize {
    split
        .base
        .iter()
        .position(|&b| b == label)
        .map_or(0, |p| p + 1)
}

/// Per-point accuracy of the attached classifier.
pub fn point_accuracy(
    net: &EmbeddingNet<f32>,
    scenes: &[Scene],
    split: &DatasetSplit,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in scenes {
        let fwd = net.forward_cloud(&s.cloud)?;
        let logits = fwd
            .logits
            .ok_or_else(|| Error::InvalidArgument("no classifier attached".into()))?;
        for (row, &l) in logits.rows().into_iter().zip(s.cloud.labels()) {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            correct += usize::from(best == base_target(l, split));
            total += 1;
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    })
}

/// Per-point classification over the base classes through a temporary
/// classifier head, which is discarded afterwards. On a non-finite loss
/// the network keeps its last finite state and an error is returned.
pub fn pretrain(
    net: &mut EmbeddingNet<f32>,
    scenes: &[Scene],
    split: &DatasetSplit,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainReport> {
    if !(cfg.lr >= 0.0) || cfg.batch == 0 || !(0.0..1.0).contains(&cfg.holdout) {
        return Err(Error::Config(
            "pretrain needs lr >= 0, batch >= 1 and holdout in [0, 1)".into(),
        ));
    }
    let held = ((scenes.len() as f64) * cfg.holdout).round() as usize;
    let (fit, holdout) = scenes.split_at(scenes.len() - held);
    if fit.is_empty() {
        return Err(Error::Config("no scenes left to pretrain on".into()));
    }
    net.attach_classifier(split.base.len() + 1, seed ^ 0x5eed);
    let report = fit_classifier(net, fit, holdout, split, cfg, seed);
    net.detach_classifier();
    report
}

fn fit_classifier(
    net: &mut EmbeddingNet<f32>,
    fit: &[Scene],
    holdout: &[Scene],
    split: &DatasetSplit,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainReport> {
    let mut adam = Adam::new(&net.params);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..fit.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut episode_rng(seed, 1_000_000 + epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut grads = net.zero_grads();
            let mut batch_loss = 0.0;
            for &i in batch {
                let cloud = &fit[i].cloud;
                let fwd = net.forward_cloud(cloud)?;
                let targets: Vec<usize> = cloud
                    .labels()
                    .iter()
                    .map(|&l| base_target(l, split))
                    .collect();
                let logits = fwd.logits.as_ref().expect("classifier attached");
                let (loss, mut d) = cross_entropy(logits.view(), &targets)?;
                d /= batch.len() as f32;
                net.backward(&fwd, None, None, Some(d.view()), &mut grads);
                batch_loss += loss as f64 / batch.len() as f64;
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFinite(format!(
                    "pretraining loss at epoch {epoch}"
                )));
            }
            let previous = net.params.clone();
            adam.step(&mut net.params, &grads, cfg.lr);
            if !net.params.all_finite() {
                net.params = previous;
                return Err(Error::NonFinite(format!(
                    "weights after a step in epoch {epoch}"
                )));
            }
            epoch_loss += batch_loss * batch.len() as f64 / fit.len() as f64;
        }
        log::info!("pretrain epoch {epoch}: loss {epoch_loss:.4}");
        epoch_losses.push(epoch_loss);
    }
    let holdout_accuracy = if holdout.is_empty() {
        point_accuracy(net, fit, split)?
    } else {
        point_accuracy(net, holdout, split)?
    };
    Ok(PretrainReport {
        epoch_losses,
        holdout_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Feature extractor learning rate.
    pub lr_backbone: f64,
    /// Projection head learning rate.
    pub lr_projection: f64,
    /// Noise ratios drawn uniformly per training episode.
    pub noise_mix: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lr_backbone: 1e-4,
            lr_projection: 1e-3,
            noise_mix: TRAINING_NOISE_MIX.to_vec(),
        }
    }
}

/// Episode shape shared by training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeShape {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries: usize,
}

impl Default for EpisodeShape {
    fn default() -> Self {
        Self {
            n_way: 2,
            k_shot: 5,
            queries: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub ce: Vec<f64>,
    pub ccns: Vec<f64>,
}

/// Fine-tunes on a seeded stream of noisy base-class episodes with
/// `ce + lambda * ccns`.
#[allow(clippy::too_many_arguments)]
pub fn episodic_train(
    net: &mut EmbeddingNet<f32>,
    sampler: &EpisodeSampler<'_>,
    shape: EpisodeShape,
    loss: &LossConfig,
    n_proto: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if net.has_classifier() {
        net.detach_classifier();
    }
    let mut adam = Adam::new(&net.params);
    let mut report = TrainReport {
        losses: Vec::with_capacity(cfg.iterations),
        ce: Vec::with_capacity(cfg.iterations),
        ccns: Vec::with_capacity(cfg.iterations),
    };
    for it in 0..cfg.iterations {
        let episode = sampler.training_episode(
            seed,
            it as u64,
            shape.n_way,
            shape.k_shot,
            shape.queries,
            &cfg.noise_mix,
        )?;
        let out = episode_objective(net, &episode, loss, n_proto, None)?;
        if !out.grads.all_finite() {
            return Err(Error::NonFinite(format!("gradients at iteration {it}")));
        }
        adam.step_by_layer(&mut net.params, &out.grads, |layer| match layer {
            Layer::Projection => cfg.lr_projection,
            _ => cfg.lr_backbone,
        });
        if it % 100 == 0 {
            log::info!(
                "episode {it}: loss {:.4} (ce {:.4}, ccns {:.4})",
                out.loss,
                out.ce,
                out.ccns
            );
        }
        report.losses.push(out.loss as f64);
        report.ce.push(out.ce as f64);
        report.ccns.push(out.ccns as f64);
    }
    Ok(report)
}
