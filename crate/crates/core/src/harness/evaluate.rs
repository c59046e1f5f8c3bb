use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_miou, episode_clean_ratio, PurityHistogram};
use crate::embed::EmbeddingNet;
use crate::error::{Error, Result};
use crate::fewshot::{
    build_knn_graph, global_prototype, label_propagate, multi_prototype_generation, predict_rows,
    protonet_predict, ClassPoints, PropagationConfig,
};
use crate::mdns::{mdns_filter, MdnsConfig, ShotInput};
use crate::types::{ClassId, Episode, NoiseConfig};

/// Inference settings for one evaluated variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub propagation: PropagationConfig,
    /// Noise suppression, when enabled.
    pub mdns: Option<MdnsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub index: usize,
    pub classes: Vec<ClassId>,
    pub miou: f64,
    /// Nearest-global-prototype prediction on the same retained shots.
    pub protonet_miou: f64,
    pub clean_before: f64,
    pub clean_after: f64,
    /// Shots kept per way.
    pub retained: Vec<Vec<usize>>,
    /// Ways where every shot was flagged and the fallback kicked in.
    pub fallback_ways: usize,
    pub purity: PurityHistogram,
}

struct Embedded {
    features: Array2<f64>,
    projection: Array2<f64>,
}

fn embed(net: &EmbeddingNet<f32>, cloud: &crate::types::PointCloud) -> Result<Embedded> {
    let f = net.forward_cloud(cloud)?;
    Ok(Embedded {
        features: f.features.mapv(f64::from),
        projection: f.projection.mapv(f64::from),
    })
}

fn gather(rows: &[(&Array2<f64>, usize)]) -> Array2<f64> {
    let dim = rows.first().map_or(0, |(m, _)| m.ncols());
    let mut out = Array2::zeros((rows.len(), dim));
    for (r, (m, i)) in rows.iter().enumerate() {
        out.row_mut(r).assign(&m.row(*i));
    }
    out
}

/// Segments the queries of one episode.
pub fn evaluate_episode(
    net: &EmbeddingNet<f32>,
    episode: &Episode,
    index: usize,
    settings: &EvalSettings,
) -> Result<EpisodeResult> {
    let n = episode.n_way();
    let support: Vec<Vec<Embedded>> = episode
        .support
        .iter()
        .map(|shots| {
            shots
                .iter()
                .map(|s| embed(net, &s.cloud))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut retained = Vec::with_capacity(n);
    let mut fallback_ways = 0;
    for (shots, emb) in episode.support.iter().zip(&support) {
        match &settings.mdns {
            Some(cfg) => {
                let inputs: Vec<ShotInput<'_>> = shots
                    .iter()
                    .zip(emb)
                    .map(|(s, e)| ShotInput {
                        coords: s.cloud.coords(),
                        mask: &s.mask,
                        features: e.projection.view(),
                    })
                    .collect();
                let result = mdns_filter(&inputs, cfg)?;
                fallback_ways += usize::from(result.fallback_used);
                retained.push(result.retained);
            }
            None => retained.push((0..shots.len()).collect()),
        }
    }

    let before: Vec<Vec<bool>> = episode
        .support
        .iter()
        .map(|w| w.iter().map(|s| s.is_clean()).collect())
        .collect();
    let after: Vec<Vec<bool>> = episode
        .support
        .iter()
        .zip(&retained)
        .map(|(w, keep)| keep.iter().map(|&k| w[k].is_clean()).collect())
        .collect();

    // pooled rows per class from retained shots only; removed shots give
    // neither foreground nor background
    let mut rows: Vec<Vec<(&Array2<f64>, usize)>> = vec![Vec::new(); n + 1];
    let mut truth: Vec<Vec<bool>> = vec![Vec::new(); n + 1];
    for (way, keep) in retained.iter().enumerate() {
        for &k in keep {
            let shot = &episode.support[way][k];
            let feats = &support[way][k].features;
            for (i, &fg) in shot.mask.iter().enumerate() {
                if fg {
                    rows[way + 1].push((feats, i));
                    truth[way + 1].push(shot.is_clean());
                } else {
                    rows[0].push((feats, i));
                    truth[0].push(!episode.classes.contains(&shot.cloud.labels()[i]));
                }
            }
        }
    }
    let class_feats: Vec<Array2<f64>> = rows.iter().map(|r| gather(r)).collect();
    let class_points: Vec<ClassPoints<'_>> = class_feats
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(c, (f, t))| ClassPoints {
            class: c,
            features: f.view(),
            truly_in_class: t,
        })
        .collect();
    let prototypes = multi_prototype_generation(&class_points, settings.propagation.n_proto)?;
    let purity =
        PurityHistogram::from_purities(prototypes.iter().filter(|p| p.class > 0).map(|p| p.purity));

    let queries: Vec<Embedded> = episode
        .queries
        .iter()
        .map(|q| embed(net, q))
        .collect::<Result<_>>()?;
    let total_q: usize = queries.iter().map(|q| q.features.nrows()).sum();
    let dim = net.config.feature_dim;
    let n_proto = prototypes.len();
    let mut nodes = Array2::zeros((n_proto + total_q, dim));
    let mut seeds = Array2::zeros((n_proto + total_q, n + 1));
    for (i, p) in prototypes.iter().enumerate() {
        nodes.row_mut(i).assign(&p.vector);
        seeds[[i, p.class]] = 1.0;
    }
    let mut off = n_proto;
    let mut gt = Vec::with_capacity(total_q);
    for (t, q) in queries.iter().enumerate() {
        let m = q.features.nrows();
        nodes.slice_mut(s![off..off + m, ..]).assign(&q.features);
        gt.extend(episode.query_labels(t));
        off += m;
    }
    let graph = build_knn_graph(nodes.view(), settings.propagation.k_nn)?;
    let scores = label_propagate(graph.view(), seeds.view(), settings.propagation.alpha)?;
    let pred = predict_rows(scores.slice(s![n_proto.., ..]));
    let miou = compute_miou(&pred, &gt, n)?;

    let globals = class_points
        .iter()
        .filter(|c| c.features.nrows() > 0)
        .map(global_prototype)
        .collect::<Result<Vec<_>>>()?;
    let proto_pred = protonet_predict(&globals, nodes.slice(s![n_proto.., ..]));
    let protonet_miou = compute_miou(&proto_pred, &gt, n)?;

    Ok(EpisodeResult {
        index,
        classes: episode.classes.clone(),
        miou,
        protonet_miou,
        clean_before: episode_clean_ratio(&before),
        clean_after: episode_clean_ratio(&after),
        retained,
        fallback_ways,
        purity,
    })
}

/// Metrics of one variant over a fixed episode set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub noise: NoiseConfig,
    pub episodes: usize,
    pub mean_miou: f64,
    pub mean_protonet_miou: f64,
    pub clean_ratio_before: f64,
    pub clean_ratio_after: f64,
    pub purity_histogram: PurityHistogram,
    pub mid_range_mass: f64,
    pub fallback_ways: usize,
    pub per_episode: Vec<EpisodeResult>,
    /// Full experiment configuration echo.
    pub config: serde_json::Value,
    /// Excluded from determinism comparisons.
    pub wall_time_secs: f64,
}

impl MetricsReport {
    pub fn from_results(
        variant: &str,
        noise: NoiseConfig,
        per_episode: Vec<EpisodeResult>,
        config: serde_json::Value,
        wall_time_secs: f64,
    ) -> Self {
        let count = per_episode.len().max(1) as f64;
        let mean =
            |f: &dyn Fn(&EpisodeResult) -> f64| per_episode.iter().map(f).sum::<f64>() / count;
        let mut hist = PurityHistogram::default();
        for r in &per_episode {
            hist.merge(&r.purity);
        }
        Self {
            variant: variant.to_string(),
            noise,
            episodes: per_episode.len(),
            mean_miou: mean(&|r| r.miou),
            mean_protonet_miou: mean(&|r| r.protonet_miou),
            clean_ratio_before: mean(&|r| r.clean_before),
            clean_ratio_after: mean(&|r| r.clean_after),
            mid_range_mass: hist.mid_range_mass(),
            purity_histogram: hist,
            fallback_ways: per_episode.iter().map(|r| r.fallback_ways).sum(),
            per_episode,
            config,
            wall_time_secs,
        }
    }

    /// Checks value ranges and histogram bookkeeping.
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = unit(self.mean_miou)
            && unit(self.mean_protonet_miou)
            && unit(self.clean_ratio_before)
            && unit(self.clean_ratio_after)
            && self
                .per_episode
                .iter()
                .all(|r| unit(r.miou) && unit(r.clean_before) && unit(r.clean_after))
            && self
                .per_episode
                .iter()
                .all(|r| r.retained.iter().all(|w| !w.is_empty()))
            && self.purity_histogram.total()
                == self
                    .per_episode
                    .iter()
                    .map(|r| r.purity.total())
                    .sum::<usize>();
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "report '{}' breaks a metric invariant",
                self.variant
            )))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the wall-time field zeroed, for byte comparisons.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_time_secs = 0.0;
        copy.to_json()
    }

    /// One row per episode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,classes,miou,protonet_miou,clean_before,clean_after,fallback_ways\n",
        );
        for r in &self.per_episode {
            let classes: Vec<String> = r.classes.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{}",
                r.index,
                classes.join("-"),
                r.miou,
                r.protonet_miou,
                r.clean_before,
                r.clean_after,
                r.fallback_ways
            );
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        Ok(())
    }
}

/// Evaluates every episode; the report does not depend on scheduling.
pub fn meta_test(
    net: &EmbeddingNet<f32>,
    episodes: &[Episode],
    settings: &EvalSettings,
    variant: &str,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    settings.propagation.validate()?;
    if let Some(m) = &settings.mdns {
        m.validate()?;
    }
    let start = std::time::Instant::now();
    let results = episodes
        .par_iter()
        .enumerate()
        .map(|(i, ep)| evaluate_episode(net, ep, i, settings))
        .collect::<Result<Vec<_>>>()?;
    let noise = episodes.first().map_or(NoiseConfig::clean(), |e| e.noise);
    let report = MetricsReport::from_results(
        variant,
        noise,
        results,
        config,
        start.elapsed().as_secs_f64(),
    );
    report.validate()?;
    Ok(report)
}
