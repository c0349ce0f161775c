use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, Modality, NUM_LEVELS};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    #[serde(default = "default_main")]
    pub main_modality: Modality,
    #[serde(default = "default_streams")]
    pub enabled_streams: BTreeSet<Modality>,
    #[serde(default = "default_fusion")]
    pub fusion_mode: FusionMode,
    #[serde(default = "default_mam_levels")]
    pub mam_levels: BTreeSet<usize>,
    #[serde(default = "default_hmap_levels")]
    pub hmap_levels: BTreeSet<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_main() -> Modality {
    Modality::Rgb
}

fn default_streams() -> BTreeSet<Modality> {
    Modality::ALL.into_iter().collect()
}

fn default_fusion() -> FusionMode {
    FusionMode::Progressive
}

fn default_mam_levels() -> BTreeSet<usize> {
    [3, 4, 5].into_iter().collect()
}

fn default_hmap_levels() -> BTreeSet<usize> {
    [1, 2, 3].into_iter().collect()
}

impl ModelConfig {
    pub fn new(encoder: EncoderConfig) -> Self {
        Self {
            encoder,
            main_modality: default_main(),
            enabled_streams: default_streams(),
            fusion_mode: default_fusion(),
            mam_levels: default_mam_levels(),
            hmap_levels: default_hmap_levels(),
            seed: 0,
        }
    }

    pub fn toy(input: usize) -> Self {
        Self::new(EncoderConfig::toy(input))
    }

    pub fn paper() -> Self {
        Self::new(EncoderConfig::paper())
    }

    pub fn micro(input: usize) -> Self {
        Self::new(EncoderConfig::micro(input))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Two-stream RGB + flow variant.
    pub fn without_depth(mut self) -> Self {
        self.enabled_streams.remove(&Modality::Depth);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !self.enabled_streams.contains(&Modality::Rgb) {
            return Err(Error::Config("the rgb stream cannot be disabled".into()));
        }
        if self.enabled_streams.len() < 2 {
            return Err(Error::Config("at least one auxiliary stream is required".into()));
        }
        if !self.enabled_streams.contains(&self.main_modality) {
            return Err(Error::Config(format!(
                "main_modality `{}` is not an enabled stream",
                self.main_modality
            )));
        }
        if let Some(l) = self.mam_levels.iter().find(|l| !(3..=5).contains(*l)) {
            return Err(Error::Config(format!("mam level {l} outside 3..=5")));
        }
        if let Some(l) = self.hmap_levels.iter().find(|l| !(1..=NUM_LEVELS).contains(*l)) {
            return Err(Error::Config(format!("hmap level {l} outside 1..=5")));
        }
        Ok(())
    }

    /// Main modality first, then the auxiliaries in flow, depth, rgb order.
    pub fn stream_order(&self) -> Vec<Modality> {
        let mut order = vec![self.main_modality];
        for m in [Modality::Flow, Modality::Depth, Modality::Rgb] {
            if m != self.main_modality && self.enabled_streams.contains(&m) {
                order.push(m);
            }
        }
        order
    }

    pub fn num_aux(&self) -> usize {
        self.enabled_streams.len() - 1
    }
}
