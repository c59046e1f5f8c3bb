//! Domain types shared across the crate.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dataset-level class identifier.
pub type ClassId = u32;

/// Per-point input width: xyz, rgb and bounding-box normalized xyz.
pub const INPUT_DIM: usize = 9;

/// Default number of points per cloud at full scale.
pub const DEFAULT_POINTS: usize = 2048;

/// Minimum foreground point count for a support shot.
pub const DEFAULT_MIN_FG: usize = 100;

/// A labeled point cloud: coordinates in meters, colors in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<[f32; 3]>,
    colors: Vec<[f32; 3]>,
    labels: Vec<ClassId>,
}

impl PointCloud {
    pub fn new(coords: Vec<[f32; 3]>, colors: Vec<[f32; 3]>, labels: Vec<ClassId>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("point cloud has no points".into()));
        }
        if coords.len() != colors.len() || coords.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "length mismatch: {} coords, {} colors, {} labels",
                coords.len(),
                colors.len(),
                labels.len()
            )));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        if colors
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidArgument(
                "colors must be finite and within [0, 1]".into(),
            ));
        }
        Ok(Self {
            coords,
            colors,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f32; 3]] {
        &self.coords
    }

    pub fn colors(&self) -> &[[f32; 3]] {
        &self.colors
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    /// Checks every label against a vocabulary of `num_classes` ids.
    pub fn check_vocabulary(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l as usize >= num_classes) {
            Some(&l) => Err(Error::LabelOutOfRange {
                label: l as usize,
                classes: num_classes,
            }),
            None => Ok(()),
        }
    }

    /// Mask of points carrying `class`.
    pub fn class_mask(&self, class: ClassId) -> Vec<bool> {
        self.labels.iter().map(|&l| l == class).collect()
    }

    /// Builds the `m x 9` network input: xyz, rgb, xyz normalized to the
    /// cloud's bounding box.
    pub fn input_features<T: Scalar>(&self) -> Array2<T> {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &self.coords {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut out = Array2::<T>::zeros((self.len(), INPUT_DIM));
        for (i, (p, c)) in self.coords.iter().zip(&self.colors).enumerate() {
            for a in 0..3 {
                let extent = hi[a] - lo[a];
                let norm = if extent > 0.0 {
                    (p[a] - lo[a]) / extent
                } else {
                    0.0
                };
                out[[i, a]] = T::of(p[a] as f64);
                out[[i, 3 + a]] = T::of(c[a] as f64);
                out[[i, 6 + a]] = T::of(norm as f64);
            }
        }
        out
    }
}

/// One labeled support sample: a cloud plus the declared-class mask.
///
/// `true_class` is bookkeeping for evaluation and for the contrastive
/// objective at training time; inference never reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportShot {
    pub cloud: PointCloud,
    pub mask: Vec<bool>,
    pub declared_class: ClassId,
    pub true_class: ClassId,
}

impl SupportShot {
    pub fn new(
        cloud: PointCloud,
        mask: Vec<bool>,
        declared_class: ClassId,
        true_class: ClassId,
    ) -> Result<Self> {
        if mask.len() != cloud.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries for {} points",
                mask.len(),
                cloud.len()
            )));
        }
        Ok(Self {
            cloud,
            mask,
            declared_class,
            true_class,
        })
    }

    pub fn is_clean(&self) -> bool {
        self.true_class == self.declared_class
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn foreground_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    InEpisode,
    OutEpisode,
    /// Training-time noise drawn from the other base classes.
    Training,
}

/// Support-set label noise setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub ratio: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::clean()
    }
}

impl NoiseConfig {
    pub const ALLOWED_RATIOS: [f64; 4] = [0.0, 0.2, 0.4, 0.6];

    pub fn clean() -> Self {
        Self {
            kind: NoiseKind::None,
            ratio: 0.0,
        }
    }

    pub fn in_episode(ratio: f64) -> Result<Self> {
        let c = Self {
            kind: NoiseKind::InEpisode,
            ratio,
        };
        c.validate().map(|_| c)
    }

    pub fn training(ratio: f64) -> Result<Self> {
        let c = Self {
            kind: NoiseKind::Training,
            ratio,
        };
        c.validate().map(|_| c)
    }

    pub fn out_episode(ratio: f64) -> Result<Self> {
        let c = Self {
            kind: NoiseKind::OutEpisode,
            ratio,
        };
        c.validate().map(|_| c)
    }

    pub fn validate(&self) -> Result<()> {
        if !Self::ALLOWED_RATIOS
            .iter()
            .any(|r| (r - self.ratio).abs() < 1e-12)
        {
            return Err(Error::Config(format!(
                "noise ratio {} not in {{0, 0.2, 0.4, 0.6}}",
                self.ratio
            )));
        }
        let limit = match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::InEpisode => 0.4,
            NoiseKind::OutEpisode => 0.6,
            NoiseKind::Training => 0.4,
        };
        if self.ratio > limit + 1e-12 {
            return Err(Error::Config(format!(
                "noise ratio {} exceeds the {:?} limit of {}",
                self.ratio, self.kind, limit
            )));
        }
        Ok(())
    }

    /// Noisy shots per way.
    pub fn noisy_count(&self, k_shot: usize) -> usize {
        noisy_shot_count(self.ratio, k_shot)
    }

    pub fn label(&self) -> String {
        match self.kind {
            NoiseKind::None => "clean".to_string(),
            NoiseKind::InEpisode => format!("in-episode {:.0}%", self.ratio * 100.0),
            NoiseKind::OutEpisode => format!("out-episode {:.0}%", self.ratio * 100.0),
            NoiseKind::Training => format!("training {:.0}%", self.ratio * 100.0),
        }
    }
}

pub fn noisy_shot_count(ratio: f64, k_shot: usize) -> usize {
    (ratio * k_shot as f64).round() as usize
}

/// An N-way K-shot task with a possibly noisy support set.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub classes: Vec<ClassId>,
    pub k_shot: usize,
    /// `support[way][shot]`
    pub support: Vec<Vec<SupportShot>>,
    pub queries: Vec<PointCloud>,
    pub noise: NoiseConfig,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.classes.len()
    }

    /// Checks distinct classes, shape, and the clean-majority rule per way.
    pub fn validate(&self) -> Result<()> {
        let mut seen = self.classes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.classes.len() {
            return Err(Error::InvalidArgument(
                "episode classes are not distinct".into(),
            ));
        }
        if self.support.len() != self.classes.len() {
            return Err(Error::InvalidArgument(
                "support ways do not match classes".into(),
            ));
        }
        for (way, shots) in self.support.iter().enumerate() {
            if shots.len() != self.k_shot {
                return Err(Error::InvalidArgument(format!(
                    "way {way} has {} shots",
                    shots.len()
                )));
            }
            if shots.iter().any(|s| s.declared_class != self.classes[way]) {
                return Err(Error::InvalidArgument(format!(
                    "way {way} mixes declared classes"
                )));
            }
            if !clean_majority(shots) {
                return Err(Error::Unsatisfiable(format!(
                    "way {way} violates the clean majority"
                )));
            }
        }
        Ok(())
    }

    /// Per-point episode labels of query `i`: 0 is background, `n + 1` is way `n`.
    pub fn query_labels(&self, i: usize) -> Vec<usize> {
        episode_labels(self.queries[i].labels(), &self.classes)
    }
}

/// Maps dataset labels to episode labels (0 = background, way + 1).
pub fn episode_labels(labels: &[ClassId], classes: &[ClassId]) -> Vec<usize> {
    labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).map_or(0, |w| w + 1))
        .collect()
}

/// Clean shots strictly outnumber every single noisy class.
pub fn clean_majority(shots: &[SupportShot]) -> bool {
    let clean = shots.iter().filter(|s| s.is_clean()).count();
    let mut noisy: Vec<ClassId> = shots
        .iter()
        .filter(|s| !s.is_clean())
        .map(|s| s.true_class)
        .collect();
    noisy.sort_unstable();
    let mut max_run = 0;
    let mut i = 0;
    while i < noisy.len() {
        let j = noisy[i..].iter().take_while(|&&c| c == noisy[i]).count();
        max_run = max_run.max(j);
        i += j;
    }
    clean > max_run
}

/// Axis-aligned cut counts for splitting a foreground into sub-shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl ScaleSpec {
    pub const COARSEST: ScaleSpec = ScaleSpec {
        nx: 1,
        ny: 1,
        nz: 1,
    };

    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidArgument(format!(
                "scale {nx}/{ny}/{nz} has a zero cut count"
            )));
        }
        Ok(Self { nx, ny, nz })
    }

    /// Number of sub-shots `e`.
    pub fn cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_coarsest(&self) -> bool {
        *self == Self::COARSEST
    }
}

impl std::fmt::Display for ScaleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.nx, self.ny, self.nz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> PointCloud {
        PointCloud::new(vec![[0.0; 3]; n], vec![[0.5; 3]; n], vec![0; n]).unwrap()
    }

    fn shot(declared: ClassId, truth: ClassId) -> SupportShot {
        SupportShot::new(cloud(2), vec![true, false], declared, truth).unwrap()
    }

    #[test]
    fn rejects_bad_colors_and_empty() {
        assert!(PointCloud::new(vec![], vec![], vec![]).is_err());
        assert!(PointCloud::new(vec![[0.0; 3]], vec![[1.5, 0.0, 0.0]], vec![0]).is_err());
        assert!(PointCloud::new(vec![[f32::NAN, 0.0, 0.0]], vec![[0.0; 3]], vec![0]).is_err());
    }

    #[test]
    fn vocabulary_check() {
        let c = PointCloud::new(vec![[0.0; 3]; 2], vec![[0.0; 3]; 2], vec![0, 12]).unwrap();
        assert!(c.check_vocabulary(12).is_err());
        assert!(c.check_vocabulary(13).is_ok());
    }

    #[test]
    fn noise_limits() {
        assert!(NoiseConfig::in_episode(0.4).is_ok());
        assert!(NoiseConfig::in_episode(0.6).is_err());
        assert!(NoiseConfig::out_episode(0.6).is_ok());
        assert!(NoiseConfig::out_episode(0.3).is_err());
        assert_eq!(NoiseConfig::in_episode(0.4).unwrap().noisy_count(5), 2);
        assert_eq!(noisy_shot_count(0.6, 5), 3);
        assert_eq!(noisy_shot_count(0.2, 5), 1);
    }

    #[test]
    fn clean_majority_rule() {
        let a = |n: usize, noise: &[ClassId]| {
            let mut v: Vec<_> = (0..n).map(|_| shot(1, 1)).collect();
            v.extend(noise.iter().map(|&c| shot(1, c)));
            clean_majority(&v)
        };
        assert!(a(3, &[2, 2]));
        assert!(!a(2, &[2, 2, 3]));
        assert!(a(2, &[2, 3, 4]));
        assert!(a(1, &[]));
    }

    #[test]
    fn input_features_layout() {
        let c = PointCloud::new(
            vec![[0.0, 0.0, 0.0], [2.0, 1.0, 0.0]],
            vec![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]],
            vec![0, 0],
        )
        .unwrap();
        let x = c.input_features::<f64>();
        assert_eq!(x.dim(), (2, INPUT_DIM));
        assert_eq!(x[[1, 0]], 2.0);
        assert!((x[[1, 4]] - 0.5).abs() < 1e-6);
        assert_eq!(x[[1, 6]], 1.0);
        assert_eq!(x[[1, 8]], 0.0);
    }

    #[test]
    fn episode_label_mapping() {
        assert_eq!(episode_labels(&[3, 7, 5, 7], &[7, 5]), vec![0, 1, 2, 1]);
    }
}
