//! JSON configuration for the pipeline and for experiments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::classifier::TrainConfig;
use crate::fusion::FusionStrategy;
use crate::normalization::{ClaheConfig, DEFAULT_TEXTURE_HEIGHT, DEFAULT_TEXTURE_WIDTH};
use crate::rings::RingConfig;
use crate::segmentation::{DetectorConfig, DEFAULT_S1, DEFAULT_S2};
use crate::stripes::StripeConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Preprocessing, stripe and training settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub s1: f64,
    pub s2: f64,
    pub texture_width: usize,
    pub texture_height: usize,
    pub clahe: ClaheConfig,
    pub detector: DetectorConfig,
    pub stripes: StripeConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            s1: DEFAULT_S1,
            s2: DEFAULT_S2,
            texture_width: DEFAULT_TEXTURE_WIDTH,
            texture_height: DEFAULT_TEXTURE_HEIGHT,
            clahe: ClaheConfig::default(),
            detector: DetectorConfig::default(),
            stripes: StripeConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Standard,
    #[serde(rename = "soft_lens_1")]
    SoftLens1,
    #[serde(rename = "soft_lens_2")]
    SoftLens2,
    #[serde(rename = "soft_lens_3")]
    SoftLens3,
    StripeAblation,
    FusionCompare,
    RingAnalysis,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Standard => "standard",
            Protocol::SoftLens1 => "soft_lens_1",
            Protocol::SoftLens2 => "soft_lens_2",
            Protocol::SoftLens3 => "soft_lens_3",
            Protocol::StripeAblation => "stripe_ablation",
            Protocol::FusionCompare => "fusion_compare",
            Protocol::RingAnalysis => "ring_analysis",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown protocol {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub protocol: Protocol,
    pub pipeline: PipelineConfig,
    pub fusion: FusionStrategy,
    /// Repeat `i` trains with seed `base_seed + i`.
    pub base_seed: u64,
    pub repeat_count: usize,
    /// Stripe heights compared by the ablation protocol.
    pub ablation_heights: Vec<usize>,
    pub rings: RingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            protocol: Protocol::Standard,
            pipeline: PipelineConfig::default(),
            fusion: FusionStrategy::MajorityVote,
            base_seed: 0,
            repeat_count: 5,
            ablation_heights: vec![24, 32, 48, 64],
            rings: RingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.format_version != CONFIG_FORMAT_VERSION {
            return bad(format!(
                "unsupported format_version {}",
                self.format_version
            ));
        }
        if self.repeat_count == 0 {
            return bad("repeat_count must be at least 1".into());
        }
        let p = &self.pipeline;
        if p.stripes.height == 0 || p.stripes.stride == 0 {
            return bad("stripe height and stride must be at least 1".into());
        }
        if p.stripes.height > p.texture_height {
            return bad(format!(
                "stripe height {} exceeds texture height {}",
                p.stripes.height, p.texture_height
            ));
        }
        if self.protocol == Protocol::StripeAblation {
            if self.ablation_heights.is_empty() {
                return bad("stripe_ablation needs at least one height".into());
            }
            if let Some(h) = self
                .ablation_heights
                .iter()
                .find(|&&h| h == 0 || h > p.texture_height)
            {
                return bad(format!(
                    "ablation height {h} outside 1..={}",
                    p.texture_height
                ));
            }
        }
        if self.protocol == Protocol::RingAnalysis && self.rings.rings < 2 {
            return bad("ring analysis needs at least 2 rings".into());
        }
        Ok(())
    }

    /// Seed of each repeat.
    pub fn repeat_seeds(&self) -> Vec<u64> {
        (0..self.repeat_count as u64)
            .map(|i| self.base_seed.wrapping_add(i))
            .collect()
    }
}

pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_pipeline_config(text: &str) -> Result<PipelineConfig, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn load_json_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_experiment_config(&text).unwrap(), cfg);
        assert_eq!(cfg.repeat_seeds(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg =
            parse_experiment_config(r#"{"protocol":"soft_lens_2","repeat_count":2}"#).unwrap();
        assert_eq!(cfg.protocol, Protocol::SoftLens2);
        assert_eq!(cfg.pipeline.stripes.height, 32);
        assert_eq!(
            "fusion_compare".parse::<Protocol>().unwrap(),
            Protocol::FusionCompare
        );
    }

    #[test]
    fn rejects_invalid() {
        assert!(parse_experiment_config(r#"{"repeat_count":0}"#).is_err());
        assert!(parse_experiment_config(r#"{"pipeline":{"stripes":{"height":80}}}"#).is_err());
        assert!(parse_experiment_config(r#"{"format_version":9}"#).is_err());
        assert!(parse_experiment_config(r#"{"bogus":1}"#).is_err());
        assert!(
            parse_experiment_config(r#"{"protocol":"stripe_ablation","ablation_heights":[]}"#)
                .is_err()
        );
    }
}
