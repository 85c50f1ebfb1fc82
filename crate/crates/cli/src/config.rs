//! Run configuration: one TOML file with a table per stage.

use std::path::Path;

use anyhow::{Context, Result};
use emogaze::events::DetectorConfig;
use emogaze::features::SequenceLayout;
use emogaze::model::split::DEFAULT_FRACTIONS;
use emogaze::model::ModelConfig;
use emogaze::pipeline::PipelineConfig;
use emogaze::roi::RegionMap;
use emogaze::synth::{CohortSpec, PlantedEffects};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation, test.
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cohort: CohortSpec,
    pub effects: PlantedEffects,
    pub detector: DetectorConfig,
    pub regions: RegionMap,
    pub sequence: SequenceLayout,
    pub split: SplitConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("{}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("{}: invalid configuration", p.display()))?
            }
        };
        config.model.validate()?;
        config.pipeline().validate()?;
        Ok(config)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            detector: self.detector,
            regions: self.regions.clone(),
            sequence: self.sequence.clone(),
        }
    }

    /// Digest of the effective configuration, defaults included.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Per-stage seed derived from the run seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}/{stage}").as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}
