use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{stream_rng, SyntheticDataset};
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::types::{ClassId, Episode, NoiseConfig, NoiseKind, SupportShot};

/// Resampling budget for a noisy-class multiset that keeps the clean majority.
pub const MULTISET_ATTEMPTS: usize = 100;

/// Training-time noise ratios, drawn uniformly per episode.
pub const TRAINING_NOISE_MIX: [f64; 3] = [0.0, 0.2, 0.4];

const EPISODE_STREAM: u64 = 3 << 32;

/// Draws episodes from one scene pool.
#[derive(Debug, Clone)]
pub struct EpisodeSampler<'a> {
    scenes: &'a [Scene],
    ways: Vec<ClassId>,
    /// Out-episode noise candidates (the episode's own classes are removed per draw).
    out_pool: Vec<ClassId>,
    /// Training noise candidates (the declared class is removed per draw).
    training_pool: Vec<ClassId>,
    /// Scenes holding at least `min_fg` points of each class.
    index: BTreeMap<ClassId, Vec<usize>>,
}

struct Draft {
    episode: Episode,
    used: BTreeSet<usize>,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(
        scenes: &'a [Scene],
        ways: Vec<ClassId>,
        out_pool: Vec<ClassId>,
        training_pool: Vec<ClassId>,
        min_fg: usize,
    ) -> Self {
        let mut index: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, s) in scenes.iter().enumerate() {
            let present: BTreeSet<ClassId> = s.instances.iter().map(|inst| inst.class).collect();
            for c in present {
                if s.class_count(c) >= min_fg {
                    index.entry(c).or_default().push(i);
                }
            }
        }
        Self {
            scenes,
            ways,
            out_pool,
            training_pool,
            index,
        }
    }

    /// Base-class episodes over the training pool.
    pub fn training(ds: &'a SyntheticDataset) -> Self {
        let base = ds.split.base_objects();
        Self::new(
            &ds.train,
            base.clone(),
            base.clone(),
            base,
            ds.config.min_fg,
        )
    }

    /// Novel-class episodes over the test pool; out-episode noise comes from
    /// the novel classes outside the episode.
    pub fn testing(ds: &'a SyntheticDataset) -> Self {
        let novel = ds.split.novel.clone();
        Self::new(
            &ds.test,
            novel.clone(),
            novel.clone(),
            novel,
            ds.config.min_fg,
        )
    }

    pub fn ways(&self) -> &[ClassId] {
        &self.ways
    }

    /// Scenes usable as a clean shot of `class`.
    pub fn scenes_with(&self, class: ClassId) -> &[usize] {
        self.index.get(&class).map_or(&[], |v| v.as_slice())
    }

    /// Samples an N-way K-shot episode with `t` queries. `classes` fixes the
    /// ways; otherwise `n_way` distinct ways are drawn.
    pub fn sample_episode<R: Rng>(
        &self,
        classes: Option<&[ClassId]>,
        n_way: usize,
        k_shot: usize,
        t: usize,
        noise: NoiseConfig,
        rng: &mut R,
    ) -> Result<Episode> {
        noise.validate()?;
        let classes: Vec<ClassId> = match classes {
            Some(c) => c.to_vec(),
            None => {
                if n_way > self.ways.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{n_way} ways requested from {} classes",
                        self.ways.len()
                    )));
                }
                self.ways.choose_multiple(rng, n_way).copied().collect()
            }
        };
        let mut draft = self.sample_clean(&classes, k_shot, t, rng)?;
        self.inject(&mut draft, noise, rng)?;
        draft.episode.validate()?;
        Ok(draft.episode)
    }

    fn sample_clean<R: Rng>(
        &self,
        classes: &[ClassId],
        k_shot: usize,
        t: usize,
        rng: &mut R,
    ) -> Result<Draft> {
        if classes.is_empty() || k_shot == 0 || t == 0 {
            return Err(Error::InvalidArgument(
                "episodes need N, K and T >= 1".into(),
            ));
        }
        let mut used = BTreeSet::new();
        let mut support = Vec::with_capacity(classes.len());
        for &c in classes {
            let free: Vec<usize> = self
                .scenes_with(c)
                .iter()
                .copied()
                .filter(|i| !used.contains(i))
                .collect();
            if free.len() < k_shot {
                return Err(Error::Unsatisfiable(format!(
                    "class {c} has {} unused scenes for {k_shot} shots",
                    free.len()
                )));
            }
            let picks: Vec<usize> = free.choose_multiple(rng, k_shot).copied().collect();
            let mut shots = Vec::with_capacity(k_shot);
            for i in picks {
                used.insert(i);
                shots.push(self.shot(i, c, c)?);
            }
            support.push(shots);
        }

        let pool: Vec<usize> = (0..self.scenes.len())
            .filter(|i| !used.contains(i) && classes.iter().any(|&c| self.scenes[*i].contains(c)))
            .collect();
        if pool.len() < t {
            return Err(Error::Unsatisfiable(format!(
                "{} query scenes for {t} queries",
                pool.len()
            )));
        }
        let queries: Vec<_> = pool
            .choose_multiple(rng, t)
            .map(|&i| {
                used.insert(i);
                self.scenes[i].cloud.clone()
            })
            .collect();

        Ok(Draft {
            episode: Episode {
                classes: classes.to_vec(),
                k_shot,
                support,
                queries,
                noise: NoiseConfig::clean(),
            },
            used,
        })
    }

    fn shot(&self, scene: usize, declared: ClassId, truth: ClassId) -> Result<SupportShot> {
        let cloud = self.scenes[scene].cloud.clone();
        let mask = cloud.class_mask(truth);
        SupportShot::new(cloud, mask, declared, truth)
    }

    fn noise_source(
        &self,
        kind: NoiseKind,
        classes: &[ClassId],
        declared: ClassId,
    ) -> Vec<ClassId> {
        match kind {
            NoiseKind::None => Vec::new(),
            NoiseKind::InEpisode => classes.iter().copied().filter(|&c| c != declared).collect(),
            NoiseKind::OutEpisode => self
                .out_pool
                .iter()
                .copied()
                .filter(|c| !classes.contains(c))
                .collect(),
            NoiseKind::Training => self
                .training_pool
                .iter()
                .copied()
                .filter(|&c| c != declared)
                .collect(),
        }
    }

    /// Replaces `round(ratio K)` shots per way by shots whose mask marks an
    /// object of another class, from scenes without the declared class.
    fn inject<R: Rng>(&self, draft: &mut Draft, noise: NoiseConfig, rng: &mut R) -> Result<()> {
        draft.episode.noise = noise;
        let k = draft.episode.k_shot;
        let n_noisy = noise.noisy_count(k);
        if n_noisy == 0 {
            return Ok(());
        }
        let classes = draft.episode.classes.clone();
        for (way, &declared) in classes.iter().enumerate() {
            let source = self.noise_source(noise.kind, &classes, declared);
            if source.is_empty() {
                return Err(Error::Unsatisfiable(format!(
                    "no noise source for class {declared}"
                )));
            }
            let multiset = draw_noisy_classes(&source, n_noisy, k - n_noisy, rng)?;

            let mut positions: Vec<usize> = (0..k).collect();
            positions.shuffle(rng);
            positions.truncate(n_noisy);
            positions.sort_unstable();

            for (&pos, &noisy_class) in positions.iter().zip(&multiset) {
                let candidates: Vec<usize> = self
                    .scenes_with(noisy_class)
                    .iter()
                    .copied()
                    .filter(|i| !draft.used.contains(i) && !self.scenes[*i].contains(declared))
                    .collect();
                let &scene = candidates.choose(rng).ok_or_else(|| {
                    Error::Unsatisfiable(format!(
                        "no unused scene shows class {noisy_class} without class {declared}"
                    ))
                })?;
                draft.used.insert(scene);
                draft.episode.support[way][pos] = self.shot(scene, declared, noisy_class)?;
            }
        }
        Ok(())
    }

    /// Episode `index` of a deterministic training stream: the noise ratio
    /// is drawn uniformly from `mix` and noise comes from other base classes.
    pub fn training_episode(
        &self,
        seed: u64,
        index: u64,
        n_way: usize,
        k_shot: usize,
        t: usize,
        mix: &[f64],
    ) -> Result<Episode> {
        let mut rng = episode_rng(seed, index);
        let ratio = *mix
            .choose(&mut rng)
            .ok_or_else(|| Error::Config("training noise mix is empty".into()))?;
        let noise = if ratio == 0.0 {
            NoiseConfig::clean()
        } else {
            NoiseConfig::training(ratio)?
        };
        self.sample_episode(None, n_way, k_shot, t, noise, &mut rng)
    }
}

/// Generator of episode `index` under `seed`.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    stream_rng(seed, EPISODE_STREAM + index)
}

/// Uniform noisy-class multiset whose largest multiplicity stays below the
/// clean count, resampled up to [`MULTISET_ATTEMPTS`] times.
pub fn draw_noisy_classes<R: Rng>(
    source: &[ClassId],
    count: usize,
    clean: usize,
    rng: &mut R,
) -> Result<Vec<ClassId>> {
    for _ in 0..MULTISET_ATTEMPTS {
        let draw: Vec<ClassId> = (0..count)
            .map(|_| *source.choose(rng).expect("non-empty"))
            .collect();
        let max_run = source
            .iter()
            .map(|c| draw.iter().filter(|d| *d == c).count())
            .max()
            .unwrap_or(0);
        if clean > max_run {
            return Ok(draw);
        }
    }
    Err(Error::Unsatisfiable(format!(
        "{count} noisy shots from {} classes cannot stay below {clean} clean shots",
        source.len()
    )))
}

/// All `n`-subsets of `classes` in lexicographic order.
pub fn class_combinations(classes: &[ClassId], n: usize) -> Vec<Vec<ClassId>> {
    fn rec(
        classes: &[ClassId],
        n: usize,
        start: usize,
        cur: &mut Vec<ClassId>,
        out: &mut Vec<Vec<ClassId>>,
    ) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..classes.len() {
            cur.push(classes[i]);
            rec(classes, n, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n <= classes.len() {
        rec(classes, n, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// The `index`-th paired test episode: ways cycle through all class
/// combinations, and the same `(seed, index)` yields the same clean shots
/// and queries at every noise setting.
pub fn test_episode(
    sampler: &EpisodeSampler<'_>,
    seed: u64,
    index: u64,
    n_way: usize,
    k_shot: usize,
    t: usize,
    noise: NoiseConfig,
) -> Result<Episode> {
    let combos = class_combinations(sampler.ways(), n_way);
    if combos.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{n_way} ways from {} classes",
            sampler.ways().len()
        )));
    }
    let classes = &combos[index as usize % combos.len()];
    let mut rng = episode_rng(seed, index);
    sampler.sample_episode(Some(classes), n_way, k_shot, t, noise, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::DatasetConfig;
    use rand::SeedableRng;

    fn dataset() -> SyntheticDataset {
        SyntheticDataset::generate(&DatasetConfig {
            train_scenes: 120,
            test_scenes: 120,
            ..DatasetConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn in_episode_two_way_noise() {
        let ds = dataset();
        let sampler = EpisodeSampler::testing(&ds);
        let noise = NoiseConfig::in_episode(0.4).unwrap();
        for i in 0..20 {
            let ep = test_episode(&sampler, 5, i, 2, 5, 1, noise).unwrap();
            for (way, shots) in ep.support.iter().enumerate() {
                let noisy: Vec<_> = shots.iter().filter(|s| !s.is_clean()).collect();
                assert_eq!(noisy.len(), 2);
                for s in noisy {
                    assert_eq!(s.true_class, ep.classes[1 - way]);
                    // the mask marks a real object of the noisy class
                    let fg = s.foreground_indices();
                    assert!(fg.len() >= ds.config.min_fg);
                    assert!(fg.iter().all(|&p| s.cloud.labels()[p] == s.true_class));
                    assert!(!s.cloud.labels().contains(&s.declared_class));
                }
            }
        }
    }

    #[test]
    fn clean_episode_has_clean_shots() {
        let ds = dataset();
        let sampler = EpisodeSampler::testing(&ds);
        let ep = test_episode(&sampler, 5, 3, 2, 5, 2, NoiseConfig::clean()).unwrap();
        assert!(ep.support.iter().flatten().all(|s| s.is_clean()));
        assert_eq!(ep.queries.len(), 2);
    }

    #[test]
    fn noise_levels_are_paired() {
        let ds = dataset();
        let sampler = EpisodeSampler::testing(&ds);
        let clean = test_episode(&sampler, 9, 4, 2, 5, 1, NoiseConfig::clean()).unwrap();
        let noisy = test_episode(
            &sampler,
            9,
            4,
            2,
            5,
            1,
            NoiseConfig::in_episode(0.4).unwrap(),
        )
        .unwrap();
        assert_eq!(clean.queries, noisy.queries);
        for (a, b) in clean
            .support
            .iter()
            .flatten()
            .zip(noisy.support.iter().flatten())
        {
            if b.is_clean() {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn out_episode_noise_stays_outside() {
        let ds = dataset();
        let sampler = EpisodeSampler::testing(&ds);
        let noise = NoiseConfig::out_episode(0.6).unwrap();
        for i in 0..10 {
            let ep = test_episode(&sampler, 1, i, 2, 5, 1, noise).unwrap();
            for shots in &ep.support {
                let noisy: Vec<_> = shots.iter().filter(|s| !s.is_clean()).collect();
                assert_eq!(noisy.len(), 3);
                assert!(noisy.iter().all(|s| !ep.classes.contains(&s.true_class)));
            }
            ep.validate().unwrap();
        }
    }

    #[test]
    fn multiset_resampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // two noisy draws against one clean shot can never pass from a single class
        assert!(draw_noisy_classes(&[4], 2, 1, &mut rng).is_err());
        let d = draw_noisy_classes(&[4, 5], 2, 2, &mut rng).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn combinations_enumerate_pairs() {
        let c = class_combinations(&[6, 7, 8, 9], 2);
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], vec![6, 7]);
        assert_eq!(c[5], vec![8, 9]);
    }

    #[test]
    fn training_stream_is_deterministic() {
        let ds = dataset();
        let sampler = EpisodeSampler::training(&ds);
        let a = sampler
            .training_episode(3, 17, 2, 5, 1, &TRAINING_NOISE_MIX)
            .unwrap();
        let b = sampler
            .training_episode(3, 17, 2, 5, 1, &TRAINING_NOISE_MIX)
            .unwrap();
        assert_eq!(a, b);
        assert!(a
            .classes
            .iter()
            .all(|c| ds.split.base_objects().contains(c)));
    }
}
