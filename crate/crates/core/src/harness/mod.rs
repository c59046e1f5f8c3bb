//! Pretraining, episodic training, meta-testing, metrics, configuration and
//! end-to-end experiment runs.

pub mod ablate;
pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod objective;
pub mod pipeline;
pub mod report;
pub mod train;

pub use ablate::{ablate, ablation_table, AblationAxis, AblationRow};
pub use config::{EvalConfig, ExperimentConfig};
pub use evaluate::{evaluate_episode, meta_test, EpisodeResult, EvalSettings, MetricsReport};
pub use metrics::{
    clean_ratio, compute_miou, episode_clean_ratio, way_clean_ratio, PurityHistogram,
};
pub use objective::{episode_objective, ObjectiveOutput, Partitions};
pub use pipeline::{noise_sweep, run_pipeline, test_episodes, PipelineOutput, Variant};
pub use report::render_table;
pub use train::{
    episodic_train, point_accuracy, pretrain, EpisodeShape, PretrainConfig, PretrainReport,
    TrainConfig, TrainReport,
};
