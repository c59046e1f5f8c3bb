use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{EpisodeShape, PretrainConfig, TrainConfig};
use crate::embed::NetConfig;
use crate::error::{Error, Result};
use crate::fewshot::PropagationConfig;
use crate::losses::LossConfig;
use crate::mdns::MdnsConfig;
use crate::synth::{DatasetConfig, DatasetSplit};
use crate::types::NoiseConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Paired test episodes per setting.
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

/// Everything one experiment needs, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root seed: network init, pretraining, the training stream and the
    /// test episodes derive from it.
    pub seed: u64,
    pub out: PathBuf,
    pub episode: EpisodeShape,
    /// Test-time support noise.
    pub noise: NoiseConfig,
    pub data: DatasetConfig,
    pub split: DatasetSplit,
    pub net: NetConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub propagation: PropagationConfig,
    pub mdns: MdnsConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("runs/default"),
            episode: EpisodeShape::default(),
            noise: NoiseConfig::in_episode(0.4).expect("allowed ratio"),
            data: DatasetConfig::default(),
            split: DatasetSplit::default(),
            net: NetConfig::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            propagation: PropagationConfig::default(),
            mdns: MdnsConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Seed offsets so each stage draws from its own stream.
pub mod streams {
    pub const NET_INIT: u64 = 0;
    pub const PRETRAIN: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const TEST: u64 = 3;
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn stage_seed(&self, stream: u64) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(stream)
    }

    /// Applies a command-line seed to the experiment and the data generator.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.data.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.split
            .validate(crate::synth::default_vocabulary().len())?;
        self.noise.validate()?;
        self.loss.validate()?;
        self.propagation.validate()?;
        self.mdns.validate()?;
        let e = self.episode;
        if e.n_way == 0 || e.k_shot == 0 || e.queries == 0 {
            return Err(Error::Config("N, K and T must all be >= 1".into()));
        }
        if e.n_way > self.split.novel.len() || e.n_way > self.split.base_objects().len() {
            return Err(Error::Config(format!(
                "{} ways exceed the available classes",
                e.n_way
            )));
        }
        if self.loss.lambda > 0.0 && e.k_shot < 2 {
            return Err(Error::Config("the contrastive term needs K >= 2".into()));
        }
        if self.train.noise_mix.is_empty() {
            return Err(Error::Config("training noise mix is empty".into()));
        }
        for &r in &self.train.noise_mix {
            if r != 0.0 {
                NoiseConfig::training(r)?;
            }
        }
        if self.net.input_dim != crate::types::INPUT_DIM {
            return Err(Error::Config(format!(
                "input_dim must be {}",
                crate::types::INPUT_DIM
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str("seed = 3\n[episode]\nk_shot = 3\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.episode.k_shot, 3);
        assert_eq!(cfg.episode.n_way, 2);
        assert_eq!(cfg.train.iterations, 2000);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        for text in [
            "[noise]\nkind = \"in_episode\"\nratio = 0.6\n",
            "[loss]\ntau = 0.0\n",
            "[episode]\nn_way = 9\n",
            "[train]\nnoise_mix = [0.0, 0.3]\n",
            "not toml at all [",
        ] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }
}
