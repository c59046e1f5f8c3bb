//! Episode training objective: prototype-head cross-entropy on the query
//! points plus the component-level contrastive term on each way's support
//! projections, with exact gradients for every network parameter.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::embed::{EmbeddingNet, Forward, Params};
use crate::error::{Error, Result};
use crate::fewshot::train_head::PrototypeHead;
use crate::geometry::mean_rows;
use crate::losses::{ccns_loss_with_partition, component_partitions, cross_entropy, LossConfig};
use crate::sampling::fps_partition;
use crate::scalar::Scalar;
use crate::types::{ClassId, Episode, PointCloud};

/// Discrete choices made during one evaluation of the objective. Passing
/// them back in holds the piecewise-constant parts fixed, which is what
/// finite-difference checks need.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    /// Per head class (background first), groups of pooled support rows.
    pub head: Vec<Vec<Vec<usize>>>,
    /// Per way, per shot, groups of that shot's foreground rows.
    pub components: Vec<Vec<Vec<Vec<usize>>>>,
}

#[derive(Debug, Clone)]
pub struct ObjectiveOutput<T> {
    pub loss: T,
    pub ce: T,
    /// Component-level loss averaged over ways (zero when `lambda = 0`).
    pub ccns: T,
    pub grads: Params<T>,
    pub partitions: Partitions,
}

/// Support rows pooled per head class: `(cloud, row)` pairs.
fn pooled_rows(episode: &Episode) -> Vec<Vec<(usize, usize)>> {
    let n = episode.n_way();
    let mut classes = vec![Vec::new(); n + 1];
    let mut cloud = 0;
    for (way, shots) in episode.support.iter().enumerate() {
        for shot in shots {
            for (row, &fg) in shot.mask.iter().enumerate() {
                classes[if fg { way + 1 } else { 0 }].push((cloud, row));
            }
            cloud += 1;
        }
    }
    classes
}

fn gather<T: Scalar>(fwds: &[Forward<T>], rows: &[(usize, usize)]) -> Array2<T> {
    let dim = fwds[0].features.ncols();
    let mut out = Array2::zeros((rows.len(), dim));
    for (r, &(c, i)) in rows.iter().enumerate() {
        out.row_mut(r).assign(&fwds[c].features.row(i));
    }
    out
}

/// Loss, gradients and partitions of `episode` under `net`.
pub fn episode_objective<T: Scalar>(
    net: &EmbeddingNet<T>,
    episode: &Episode,
    loss: &LossConfig,
    n_proto: usize,
    frozen: Option<&Partitions>,
) -> Result<ObjectiveOutput<T>> {
    loss.validate()?;
    let n = episode.n_way();
    let clouds: Vec<&PointCloud> = episode
        .support
        .iter()
        .flatten()
        .map(|s| &s.cloud)
        .chain(&episode.queries)
        .collect();
    let n_support = clouds.len() - episode.queries.len();
    let fwds: Vec<Forward<T>> = clouds
        .par_iter()
        .map(|c| net.forward_cloud(c))
        .collect::<Result<_>>()?;

    // prototypes from pooled support features
    let pooled = pooled_rows(episode);
    let class_feats: Vec<Array2<T>> = pooled.iter().map(|rows| gather(&fwds, rows)).collect();
    if let Some(c) = class_feats.iter().position(|f| f.nrows() == 0) {
        return Err(Error::InvalidArgument(format!(
            "head class {c} has no support points"
        )));
    }
    let head_parts: Vec<Vec<Vec<usize>>> = match frozen {
        Some(p) => p.head.clone(),
        None => class_feats
            .iter()
            .map(|f| fps_partition(f.view(), n_proto))
            .collect::<Result<_>>()?,
    };
    let dim = net.config.feature_dim;
    let mut proto_rows = Vec::new();
    let mut proto_class = Vec::new();
    let mut proto_members: Vec<(usize, &Vec<usize>)> = Vec::new();
    for (c, groups) in head_parts.iter().enumerate() {
        for g in groups {
            proto_rows.push(mean_rows(class_feats[c].view(), g)?);
            proto_class.push(c);
            proto_members.push((c, g));
        }
    }
    let mut protos = Array2::zeros((proto_rows.len(), dim));
    for (i, p) in proto_rows.iter().enumerate() {
        protos.row_mut(i).assign(p);
    }
    let head = PrototypeHead::new(protos, proto_class, n + 1)?;

    // cross-entropy over all query points
    let query_fwds = &fwds[n_support..];
    let total_q: usize = query_fwds.iter().map(|f| f.features.nrows()).sum();
    let mut q = Array2::zeros((total_q, dim));
    let mut labels = Vec::with_capacity(total_q);
    let mut off = 0;
    for (t, f) in query_fwds.iter().enumerate() {
        let m = f.features.nrows();
        q.slice_mut(ndarray::s![off..off + m, ..])
            .assign(&f.features);
        labels.extend(episode.query_labels(t));
        off += m;
    }
    let hf = head.forward(q.view());
    let (ce, d_logits) = cross_entropy(hf.logits.view(), &labels)?;
    let (d_q, d_p) = head.backward(q.view(), &hf, d_logits.view());

    let mut d_feat: Vec<Array2<T>> = fwds
        .iter()
        .map(|f| Array2::zeros(f.features.dim()))
        .collect();
    let mut off = 0;
    for (t, f) in query_fwds.iter().enumerate() {
        let m = f.features.nrows();
        d_feat[n_support + t].assign(&d_q.slice(ndarray::s![off..off + m, ..]));
        off += m;
    }
    for (p, (c, members)) in proto_members.iter().enumerate() {
        let share = d_p.row(p).mapv(|v| v / T::of(members.len() as f64));
        for &r in members.iter() {
            let (cloud, row) = pooled[*c][r];
            let mut dst = d_feat[cloud].row_mut(row);
            dst += &share;
        }
    }

    // component-level contrast per way on foreground projections
    let mut ccns_total = T::zero();
    let mut component_parts = Vec::with_capacity(n);
    let mut d_proj: Vec<Option<Array2<T>>> = vec![None; fwds.len()];
    if loss.lambda > 0.0 {
        let scale = T::of(loss.lambda / n as f64);
        let mut cloud = 0;
        for (way, shots) in episode.support.iter().enumerate() {
            let fg: Vec<Vec<usize>> = shots.iter().map(|s| s.foreground_indices()).collect();
            let rows: Vec<Array2<T>> = fg
                .iter()
                .enumerate()
                .map(|(k, idx)| fwds[cloud + k].projection.select(Axis(0), idx))
                .collect();
            let views: Vec<ArrayView2<T>> = rows.iter().map(|r| r.view()).collect();
            let truth: Vec<ClassId> = shots.iter().map(|s| s.true_class).collect();
            let parts = match frozen {
                Some(p) => p.components[way].clone(),
                None => component_partitions(&views, loss.components)?,
            };
            let (value, grads) = ccns_loss_with_partition(&views, &parts, &truth, loss.tau)?;
            ccns_total += value;
            for (k, g) in grads.into_iter().enumerate() {
                let c = cloud + k;
                let mut full = Array2::zeros(fwds[c].projection.dim());
                for (r, &i) in fg[k].iter().enumerate() {
                    full.row_mut(i).assign(&(&g.row(r) * scale));
                }
                d_proj[c] = Some(full);
            }
            component_parts.push(parts);
            cloud += shots.len();
        }
        ccns_total /= T::of(n as f64);
    }

    let total = ce + T::of(loss.lambda) * ccns_total;
    if !total.is_finite() {
        return Err(Error::NonFinite("episode loss".into()));
    }

    let per_cloud: Vec<Params<T>> = fwds
        .par_iter()
        .zip(d_feat.par_iter())
        .zip(d_proj.par_iter())
        .map(|((f, df), dp)| {
            let mut g = net.zero_grads();
            net.backward(
                f,
                Some(df.view()),
                dp.as_ref().map(|d| d.view()),
                None,
                &mut g,
            );
            g
        })
        .collect();
    // fixed summation order keeps gradients bit-reproducible
    let mut grads = net.zero_grads();
    for g in &per_cloud {
        grads.add_assign(g);
    }

    Ok(ObjectiveOutput {
        loss: total,
        ce,
        ccns: ccns_total,
        grads,
        partitions: Partitions {
            head: head_parts,
            components: component_parts,
        },
    })
}

/// Loss value only, with partitions held fixed.
pub fn episode_loss_frozen<T: Scalar>(
    net: &EmbeddingNet<T>,
    episode: &Episode,
    loss: &LossConfig,
    n_proto: usize,
    frozen: &Partitions,
) -> Result<T> {
    episode_objective(net, episode, loss, n_proto, Some(frozen)).map(|o| o.loss)
}
