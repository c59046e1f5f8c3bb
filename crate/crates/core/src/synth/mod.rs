//! Synthetic scenes of labeled primitives, the base/novel split, episode
//! sampling and instance-level support noise.

pub mod dataset;
pub mod episodes;
pub mod scene;

pub use dataset::{DatasetConfig, DatasetSplit, SplitManifest, SyntheticDataset, SPLIT_FILE};
pub use episodes::{
    class_combinations, draw_noisy_classes, episode_rng, test_episode, EpisodeSampler,
    TRAINING_NOISE_MIX,
};
pub use scene::{default_vocabulary, generate_scene, ClassShape, Instance, PrimitiveKind, Scene};
