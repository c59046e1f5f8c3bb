//! Multi-scale degree-based noise suppression.
//!
//! Shots (or their spatial sub-shots) become nodes of a graph whose edge
//! weights are ReLU-clipped cosine similarities raised to `gamma`. Nodes
//! whose degree does not exceed the mean degree are flagged as noise; votes
//! are aggregated per shot and then across scales.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{foreground_cells, l2_normalize, mean_rows};
use crate::types::ScaleSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub weights: Array2<f64>,
    pub gamma: f64,
}

/// `W_ij = max(x_i . x_j, 0)^gamma` off the diagonal, zero on it.
pub fn build_similarity_graph(nodes: ArrayView2<f64>, gamma: f64) -> Result<SimilarityGraph> {
    if nodes.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "similarity graph needs at least one node".into(),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if nodes.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity graph node features".into()));
    }
    let k = nodes.nrows();
    let dots = nodes.dot(&nodes.t());
    let mut weights = Array2::zeros((k, k));
    for i in 0..k {
        for j in (i + 1)..k {
            // average the two triangle entries so W is exactly symmetric
            let d = 0.5 * (dots[[i, j]] + dots[[j, i]]);
            let w = d.max(0.0).powf(gamma);
            weights[[i, j]] = w;
            weights[[j, i]] = w;
        }
    }
    Ok(SimilarityGraph { weights, gamma })
}

pub fn degrees(graph: &SimilarityGraph) -> Vec<f64> {
    graph.weights.rows().into_iter().map(|r| r.sum()).collect()
}

/// `I_i = d_i > mean(d)` (strict).
pub fn clean_indicator(degrees: &[f64]) -> Vec<bool> {
    if degrees.is_empty() {
        return Vec::new();
    }
    let thr = degrees.iter().sum::<f64>() / degrees.len() as f64;
    degrees.iter().map(|&d| d > thr).collect()
}

/// Which nodes share one graph and one mean threshold at a given scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphScope {
    /// One graph over every sub-shot of every shot.
    #[default]
    AllSubShots,
    /// One graph per grid cell, over the shots that have that cell.
    PerCell,
}

/// A scale together with its affinity exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLevel {
    pub scale: ScaleSpec,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdnsConfig {
    pub levels: Vec<ScaleLevel>,
    pub scope: GraphScope,
}

impl Default for MdnsConfig {
    fn default() -> Self {
        Self {
            levels: vec![
                ScaleLevel {
                    scale: ScaleSpec::COARSEST,
                    gamma: 3.0,
                },
                ScaleLevel {
                    scale: ScaleSpec {
                        nx: 2,
                        ny: 2,
                        nz: 1,
                    },
                    gamma: 1.0,
                },
            ],
            scope: GraphScope::AllSubShots,
        }
    }
}

impl MdnsConfig {
    /// Scales with the conventional exponent: 3 at the coarsest scale, 1 elsewhere.
    pub fn from_scales(scales: &[ScaleSpec]) -> Self {
        Self {
            levels: scales
                .iter()
                .map(|&scale| ScaleLevel {
                    scale,
                    gamma: if scale.is_coarsest() { 3.0 } else { 1.0 },
                })
                .collect(),
            scope: GraphScope::AllSubShots,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config(
                "noise suppression needs at least one scale".into(),
            ));
        }
        if self
            .levels
            .iter()
            .any(|l| !(l.gamma > 0.0) || l.scale.cells() == 0)
        {
            return Err(Error::Config(
                "every scale needs positive cuts and gamma".into(),
            ));
        }
        Ok(())
    }

    fn coarsest_gamma(&self) -> f64 {
        self.levels
            .iter()
            .find(|l| l.scale.is_coarsest())
            .or(self.levels.first())
            .map_or(3.0, |l| l.gamma)
    }
}

/// Borrowed view of one support shot for filtering.
#[derive(Debug, Clone, Copy)]
pub struct ShotInput<'a> {
    pub coords: &'a [[f32; 3]],
    pub mask: &'a [bool],
    /// Per-point features (`m x d`).
    pub features: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleVotes {
    pub scale: ScaleSpec,
    pub gamma: f64,
    /// Per shot, the indicator of each non-empty sub-shot.
    pub sub_shot_indicators: Vec<Vec<bool>>,
    /// Per shot, the degree of each non-empty sub-shot.
    pub sub_shot_degrees: Vec<Vec<f64>>,
    pub shot_indicators: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub scales: Vec<ScaleVotes>,
    pub final_indicators: Vec<bool>,
    pub retained: Vec<usize>,
    pub fallback_used: bool,
}

/// Clean iff at least half of the votes are clean.
fn majority(votes: &[bool]) -> bool {
    let clean = votes.iter().filter(|&&v| v).count();
    2 * clean >= votes.len()
}

/// Filters one way's support shots.
pub fn mdns_filter(shots: &[ShotInput<'_>], config: &MdnsConfig) -> Result<FilterResult> {
    if shots.is_empty() {
        return Err(Error::InvalidArgument("empty support way".into()));
    }
    config.validate()?;
    let dim = shots[0].features.ncols();
    if shots
        .iter()
        .any(|s| s.features.ncols() != dim || s.features.nrows() != s.mask.len())
    {
        return Err(Error::InvalidArgument(
            "shot feature shapes disagree".into(),
        ));
    }

    let mut scales = Vec::with_capacity(config.levels.len());
    for level in &config.levels {
        scales.push(vote_at_scale(shots, level, config.scope)?);
    }

    let final_indicators: Vec<bool> = (0..shots.len())
        .map(|i| {
            let votes: Vec<bool> = scales.iter().map(|s| s.shot_indicators[i]).collect();
            majority(&votes)
        })
        .collect();
    let mut retained: Vec<usize> = (0..shots.len()).filter(|&i| final_indicators[i]).collect();
    let fallback_used = retained.is_empty();
    if fallback_used {
        let nodes = shot_means(shots)?;
        let deg = degrees(&build_similarity_graph(
            nodes.view(),
            config.coarsest_gamma(),
        )?);
        let best = deg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        retained = (0..shots.len()).filter(|&i| deg[i] == best).collect();
    }
    Ok(FilterResult {
        scales,
        final_indicators,
        retained,
        fallback_used,
    })
}

fn shot_means(shots: &[ShotInput<'_>]) -> Result<Array2<f64>> {
    let dim = shots[0].features.ncols();
    let mut nodes = Array2::zeros((shots.len(), dim));
    for (i, s) in shots.iter().enumerate() {
        let fg: Vec<usize> = (0..s.mask.len()).filter(|&p| s.mask[p]).collect();
        let (u, _) = l2_normalize(mean_rows(s.features, &fg)?.view());
        nodes.row_mut(i).assign(&u);
    }
    Ok(nodes)
}

fn vote_at_scale(
    shots: &[ShotInput<'_>],
    level: &ScaleLevel,
    scope: GraphScope,
) -> Result<ScaleVotes> {
    let dim = shots[0].features.ncols();
    // (shot, cell index, unit feature)
    let mut nodes: Vec<(usize, usize, ndarray::Array1<f64>)> = Vec::new();
    for (k, s) in shots.iter().enumerate() {
        let cells = foreground_cells(s.coords, s.mask, level.scale)?;
        for (cell, members) in cells {
            let (u, _) = l2_normalize(mean_rows(s.features, &members)?.view());
            nodes.push((k, cell, u));
        }
    }

    let mut node_degree = vec![0.0; nodes.len()];
    let mut node_flag = vec![false; nodes.len()];
    let groups: Vec<Vec<usize>> = match scope {
        GraphScope::AllSubShots => vec![(0..nodes.len()).collect()],
        GraphScope::PerCell => {
            let mut by_cell: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (n, (_, cell, _)) in nodes.iter().enumerate() {
                by_cell.entry(*cell).or_default().push(n);
            }
            by_cell.into_values().collect()
        }
    };
    for group in groups {
        let mut feats = Array2::zeros((group.len(), dim));
        for (r, &n) in group.iter().enumerate() {
            feats.row_mut(r).assign(&nodes[n].2);
        }
        let deg = degrees(&build_similarity_graph(feats.view(), level.gamma)?);
        let flags = clean_indicator(&deg);
        for (r, &n) in group.iter().enumerate() {
            node_degree[n] = deg[r];
            node_flag[n] = flags[r];
        }
    }

    let mut sub_shot_indicators = vec![Vec::new(); shots.len()];
    let mut sub_shot_degrees = vec![Vec::new(); shots.len()];
    for (n, (k, _, _)) in nodes.iter().enumerate() {
        sub_shot_indicators[*k].push(node_flag[n]);
        sub_shot_degrees[*k].push(node_degree[n]);
    }
    let shot_indicators = sub_shot_indicators.iter().map(|v| majority(v)).collect();
    Ok(ScaleVotes {
        scale: level.scale,
        gamma: level.gamma,
        sub_shot_indicators,
        sub_shot_degrees,
        shot_indicators,
    })
}

/// One shot of a filter request read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotDescriptor {
    pub coords: Vec<[f32; 3]>,
    pub mask: Vec<bool>,
}

/// JSON side of a stand-alone filter request. The features travel in a
/// separate little-endian `f32` block holding every shot's `m x dim`
/// matrix, shots in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDescriptor {
    pub dim: usize,
    pub shots: Vec<ShotDescriptor>,
    #[serde(default)]
    pub config: MdnsConfig,
}

impl FilterDescriptor {
    /// Runs the filter on `features`, checking the block against the shapes.
    pub fn run(&self, features: &[f32]) -> Result<FilterResult> {
        let rows: usize = self.shots.iter().map(|s| s.coords.len()).sum();
        if self.dim == 0 || features.len() != rows * self.dim {
            return Err(Error::InvalidArgument(format!(
                "{} feature values for {rows} points of dimension {}",
                features.len(),
                self.dim
            )));
        }
        if self.shots.iter().any(|s| s.coords.len() != s.mask.len()) {
            return Err(Error::InvalidArgument(
                "mask and coordinate counts differ".into(),
            ));
        }
        let mut mats = Vec::with_capacity(self.shots.len());
        let mut off = 0;
        for s in &self.shots {
            let n = s.coords.len() * self.dim;
            let block = features[off..off + n]
                .iter()
                .map(|&v| f64::from(v))
                .collect();
            mats.push(
                Array2::from_shape_vec((s.coords.len(), self.dim), block).expect("sized above"),
            );
            off += n;
        }
        let inputs: Vec<ShotInput<'_>> = self
            .shots
            .iter()
            .zip(&mats)
            .map(|(s, f)| ShotInput {
                coords: &s.coords,
                mask: &s.mask,
                features: f.view(),
            })
            .collect();
        mdns_filter(&inputs, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn graph_fixtures() {
        let x = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let g = build_similarity_graph(x.view(), 3.0).unwrap();
        assert_eq!(
            g.weights,
            array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
        );
        assert_eq!(degrees(&g), vec![1.0, 1.0, 0.0]);
        assert_eq!(clean_indicator(&degrees(&g)), vec![true, true, false]);

        let y = array![[1.0, 0.0], [1.0, 0.0], [0.6, 0.8]];
        let g3 = build_similarity_graph(y.view(), 3.0).unwrap();
        assert_abs_diff_eq!(g3.weights[[0, 2]], 0.216, epsilon = 1e-12);
        let g1 = build_similarity_graph(y.view(), 1.0).unwrap();
        assert_abs_diff_eq!(g1.weights[[0, 2]], 0.6, epsilon = 1e-12);
        let d = degrees(&g1);
        assert_abs_diff_eq!(d[0], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], 1.2, epsilon = 1e-12);
        assert_eq!(clean_indicator(&d), vec![true, true, false]);
    }

    #[test]
    fn single_node_graph() {
        let g = build_similarity_graph(array![[0.0, 1.0]].view(), 3.0).unwrap();
        assert_eq!(g.weights, array![[0.0]]);
        assert_eq!(degrees(&g), vec![0.0]);
    }

    #[test]
    fn equal_degrees_are_all_flagged() {
        assert_eq!(clean_indicator(&[0.5, 0.5, 0.5]), vec![false; 3]);
    }

    #[test]
    fn tie_votes_clean() {
        assert!(majority(&[true, true, false, false]));
        assert!(!majority(&[true, false, false]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_similarity_graph(array![[f64::NAN, 0.0]].view(), 1.0).is_err());
        assert!(mdns_filter(&[], &MdnsConfig::default()).is_err());
    }

    #[test]
    fn descriptor_matches_direct_call() {
        let shot = ShotDescriptor {
            coords: vec![[0.1, 0.1, 0.0], [0.9, 0.9, 0.0]],
            mask: vec![true, true],
        };
        let desc = FilterDescriptor {
            dim: 2,
            shots: vec![shot.clone(), shot.clone(), shot],
            config: MdnsConfig::default(),
        };
        let feats: Vec<f32> = [[1.0f32, 0.0], [1.0, 0.1], [0.0, 1.0]]
            .iter()
            .flat_map(|d| [d[0], d[1], d[0], d[1]])
            .collect();
        let r = desc.run(&feats).unwrap();
        assert_eq!(r.retained, vec![0, 1]);
        assert!(desc.run(&feats[1..]).is_err());
    }
}
