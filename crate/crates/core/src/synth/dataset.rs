use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{default_vocabulary, generate_scene, ClassShape, Scene};
use crate::error::{Error, Result};
use crate::io::write_cloud_dir;
use crate::types::{ClassId, DEFAULT_MIN_FG};

/// Disjoint base and novel class sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    /// Seen during pretraining and episodic training.
    pub base: Vec<ClassId>,
    /// Only seen at test time.
    pub novel: Vec<ClassId>,
    /// Ground class present in every scene; never an episode way.
    pub floor: ClassId,
}

impl Default for DatasetSplit {
    fn default() -> Self {
        Self {
            base: (0..6).collect(),
            novel: (6..12).collect(),
            floor: 0,
        }
    }
}

impl DatasetSplit {
    pub fn validate(&self, vocabulary: usize) -> Result<()> {
        let base: BTreeSet<_> = self.base.iter().collect();
        let novel: BTreeSet<_> = self.novel.iter().collect();
        if base.len() != self.base.len() || novel.len() != self.novel.len() {
            return Err(Error::Config("duplicate class in split".into()));
        }
        if base.intersection(&novel).next().is_some() {
            return Err(Error::Config("base and novel classes overlap".into()));
        }
        if let Some(c) = self
            .base
            .iter()
            .chain(&self.novel)
            .find(|&&c| c as usize >= vocabulary)
        {
            return Err(Error::Config(format!(
                "class {c} is outside the {vocabulary}-class vocabulary"
            )));
        }
        if self.novel.contains(&self.floor) {
            return Err(Error::Config("floor class cannot be novel".into()));
        }
        Ok(())
    }

    /// Base classes that can serve as training ways.
    pub fn base_objects(&self) -> Vec<ClassId> {
        self.base
            .iter()
            .copied()
            .filter(|&c| c != self.floor)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Points per scene.
    pub points: usize,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Minimum object points for a support mask.
    pub min_fg: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            points: 512,
            train_scenes: 600,
            test_scenes: 300,
            min_objects: 2,
            max_objects: 4,
            min_fg: DEFAULT_MIN_FG,
            seed: 7,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::Config(format!(
                "object count range {}..={} is empty",
                self.min_objects, self.max_objects
            )));
        }
        let per_object = (self.points - self.points / 5) / self.max_objects;
        if per_object < self.min_fg {
            return Err(Error::Config(format!(
                "{} points leave {per_object} per object, below min_fg {}",
                self.points, self.min_fg
            )));
        }
        if self.train_scenes == 0 || self.test_scenes == 0 {
            return Err(Error::Config("scene pools must be non-empty".into()));
        }
        Ok(())
    }
}

/// Generated scenes: the training pool holds base objects only, the test
/// pool always holds at least one novel object and may hold base objects as
/// distractors.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: DatasetConfig,
    pub vocabulary: Vec<ClassShape>,
    pub split: DatasetSplit,
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
}

/// Independent generator stream for scene `index` of a pool.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const TRAIN_STREAM: u64 = 1 << 32;
const TEST_STREAM: u64 = 2 << 32;
const SCENE_ATTEMPTS: usize = 20;

fn draw_scene(
    vocab: &[ClassShape],
    split: &DatasetSplit,
    config: &DatasetConfig,
    candidates: &[ClassId],
    require: &[ClassId],
    rng: &mut ChaCha8Rng,
) -> Result<Scene> {
    let floor = &vocab[split.floor as usize];
    let mut last = Error::PlacementFailed(0);
    for _ in 0..SCENE_ATTEMPTS {
        let count = rng.random_range(config.min_objects..=config.max_objects);
        let count = count.min(candidates.len());
        let mut chosen: Vec<ClassId> = candidates.choose_multiple(rng, count).copied().collect();
        if !require.is_empty() && !chosen.iter().any(|c| require.contains(c)) {
            chosen[0] = *require.choose(rng).expect("non-empty");
            chosen.sort_unstable();
            chosen.dedup();
        }
        let shapes: Vec<&ClassShape> = chosen.iter().map(|&c| &vocab[c as usize]).collect();
        match generate_scene(floor, &shapes, config.points, rng) {
            Ok(scene) => return Ok(scene),
            Err(e @ Error::PlacementFailed(_)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

impl SyntheticDataset {
    pub fn generate(config: &DatasetConfig) -> Result<Self> {
        Self::generate_with(config, default_vocabulary(), DatasetSplit::default())
    }

    pub fn generate_with(
        config: &DatasetConfig,
        vocabulary: Vec<ClassShape>,
        split: DatasetSplit,
    ) -> Result<Self> {
        config.validate()?;
        split.validate(vocabulary.len())?;
        let base_objects = split.base_objects();
        let all_objects: Vec<ClassId> = base_objects.iter().chain(&split.novel).copied().collect();

        let train = (0..config.train_scenes)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(config.seed, TRAIN_STREAM + i as u64);
                draw_scene(&vocabulary, &split, config, &base_objects, &[], &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let test = (0..config.test_scenes)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(config.seed, TEST_STREAM + i as u64);
                draw_scene(
                    &vocabulary,
                    &split,
                    config,
                    &all_objects,
                    &split.novel,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            vocabulary,
            split,
            train,
            test,
        })
    }

    pub fn class_names(&self) -> Vec<String> {
        self.vocabulary.iter().map(|c| c.name.clone()).collect()
    }

    /// Writes both pools in the cloud format plus `split.json`.
    pub fn write(&self, dir: &Path) -> Result<SplitManifest> {
        let names = self.class_names();
        let train: Vec<_> = self.train.iter().map(|s| s.cloud.clone()).collect();
        let test: Vec<_> = self.test.iter().map(|s| s.cloud.clone()).collect();
        write_cloud_dir(&dir.join("train"), &train, &names, self.config.seed)?;
        write_cloud_dir(&dir.join("test"), &test, &names, self.config.seed)?;
        let manifest = SplitManifest {
            config: self.config.clone(),
            split: self.split.clone(),
            vocabulary: self.vocabulary.clone(),
            train_scenes: self.train.len(),
            test_scenes: self.test.len(),
            train_class_counts: class_counts(&self.train, self.vocabulary.len()),
            test_class_counts: class_counts(&self.test, self.vocabulary.len()),
        };
        std::fs::write(dir.join(SPLIT_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

pub const SPLIT_FILE: &str = "split.json";

/// Class lists, seed and per-class scene counts of a written dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub config: DatasetConfig,
    pub split: DatasetSplit,
    pub vocabulary: Vec<ClassShape>,
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// Number of scenes containing each class.
    pub train_class_counts: Vec<usize>,
    pub test_class_counts: Vec<usize>,
}

fn class_counts(scenes: &[Scene], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for s in scenes {
        let present: BTreeSet<ClassId> = s.cloud.labels().iter().copied().collect();
        for c in present {
            counts[c as usize] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            train_scenes: 30,
            test_scenes: 30,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn pools_respect_the_split() {
        let ds = SyntheticDataset::generate(&small()).unwrap();
        for s in &ds.train {
            assert!(s.cloud.labels().iter().all(|l| ds.split.base.contains(l)));
            assert!((2..=4).contains(&s.instances.len()));
        }
        for s in &ds.test {
            assert!(s
                .instances
                .iter()
                .any(|i| ds.split.novel.contains(&i.class)));
            for inst in &s.instances {
                assert!(inst.end - inst.start >= ds.config.min_fg);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = SyntheticDataset::generate(&small()).unwrap();
        let b = SyntheticDataset::generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg = DatasetConfig {
            points: 256,
            ..small()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let split = DatasetSplit {
            base: vec![0, 1, 6],
            ..DatasetSplit::default()
        };
        assert!(split.validate(12).is_err());
    }
}
