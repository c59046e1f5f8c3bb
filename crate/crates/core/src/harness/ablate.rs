//! Sweeps over components per shot, training-noise mixes and filter scales.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::evaluate::MetricsReport;
use super::pipeline::{evaluate_variant, fine_tuned, test_episodes};
use super::report::render_table;
use crate::embed::EmbeddingNet;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::mdns::MdnsConfig;
use crate::synth::SyntheticDataset;
use crate::types::ScaleSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    /// Components per shot in the contrastive term.
    Components,
    /// Training-noise ratio sets.
    NoiseMix,
    /// Filter scale combinations.
    Scales,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" | "components" => Ok(Self::Components),
            "mix" | "noise-mix" | "noise_mix" => Ok(Self::NoiseMix),
            "scales" => Ok(Self::Scales),
            other => Err(Error::Config(format!("unknown ablation axis '{other}'"))),
        }
    }
}

pub const COMPONENT_SETTINGS: [usize; 4] = [1, 2, 4, 8];

pub fn noise_mix_settings() -> Vec<Vec<f64>> {
    vec![
        vec![0.0],
        vec![0.0, 0.2],
        vec![0.0, 0.4],
        vec![0.0, 0.2, 0.4],
    ]
}

pub fn scale_settings() -> Vec<Vec<ScaleSpec>> {
    let s = |nx, ny, nz| ScaleSpec { nx, ny, nz };
    vec![
        vec![s(1, 1, 1)],
        vec![s(2, 2, 1)],
        vec![s(1, 1, 1), s(2, 2, 1)],
        vec![s(1, 1, 1), s(2, 2, 1), s(2, 2, 2)],
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub report: MetricsReport,
}

/// Runs one axis. Components and noise mix retrain the contrastive network
/// from `pretrained`; scales reuse `trained` and only change inference.
/// Every row is evaluated with suppression on the same episodes.
pub fn ablate(
    axis: AblationAxis,
    cfg: &ExperimentConfig,
    ds: &SyntheticDataset,
    pretrained: &EmbeddingNet<f32>,
    trained: &EmbeddingNet<f32>,
) -> Result<Vec<AblationRow>> {
    let episodes = test_episodes(ds, cfg, cfg.noise)?;
    let mut rows = Vec::new();
    match axis {
        AblationAxis::Components => {
            for r in COMPONENT_SETTINGS {
                let loss = LossConfig {
                    components: r,
                    ..cfg.loss
                };
                let (net, _) = fine_tuned(pretrained, ds, cfg, &loss)?;
                let setting = format!("R={r}");
                let report = evaluate_variant(&net, &episodes, cfg, true, &setting)?;
                rows.push(AblationRow { setting, report });
            }
        }
        AblationAxis::NoiseMix => {
            for mix in noise_mix_settings() {
                let mut c = cfg.clone();
                c.train.noise_mix = mix.clone();
                let (net, _) = fine_tuned(pretrained, ds, &c, &c.loss)?;
                let labels: Vec<String> = mix.iter().map(|r| format!("{r}")).collect();
                let setting = format!("{{{}}}", labels.join(","));
                let report = evaluate_variant(&net, &episodes, &c, true, &setting)?;
                rows.push(AblationRow { setting, report });
            }
        }
        AblationAxis::Scales => {
            for scales in scale_settings() {
                let mut c = cfg.clone();
                c.mdns = MdnsConfig::from_scales(&scales);
                let labels: Vec<String> = scales.iter().map(|s| s.to_string()).collect();
                let setting = labels.join(" + ");
                let report = evaluate_variant(trained, &episodes, &c, true, &setting)?;
                rows.push(AblationRow { setting, report });
            }
        }
    }
    Ok(rows)
}

pub fn ablation_table(axis: AblationAxis, rows: &[AblationRow]) -> String {
    let data: Vec<(String, Vec<f64>)> = rows
        .iter()
        .map(|r| {
            (
                r.setting.clone(),
                vec![r.report.mean_miou * 100.0, r.report.clean_ratio_after],
            )
        })
        .collect();
    render_table(
        &format!("ablation over {axis:?}"),
        &["mIoU", "clean after"],
        &data,
    )
}
