//! Run configuration with the published hyper-parameter defaults.

use crate::detector::ClassifyRule;
use crate::drift::DriftConfig;
use crate::error::{Error, Result};
use crate::neural::ModelConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Scenario file path, resolved relative to the config file when
    /// loaded from disk.
    pub scenario: String,
    /// Sensors to run; `None` runs every sensor the scenario defines.
    #[serde(default)]
    pub sensors: Option<Vec<String>>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    /// Initial training epochs over the warm-up windows.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Leading stream segment assumed anomaly-free and used for the first
    /// fit.
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_period")]
    pub stl_period: usize,
    /// Subtract only the historical trend during residualization instead
    /// of trend plus residual.
    #[serde(default)]
    pub subtract_trend_only: bool,
    #[serde(default = "default_fading")]
    pub fading_factor: f64,
    #[serde(default)]
    pub classify_rule: ClassifyRule,
    /// Noise scale, in units of the training-time latent spread, added to
    /// encodings entering the KS-test buffers. Sliding windows overlap and
    /// the latent tracks the seasonal signal, so raw means are strongly
    /// autocorrelated; the jitter restores the independence the KS
    /// p-value assumes. Zero buffers the raw latent mean.
    #[serde(default = "default_jitter")]
    pub encoding_jitter: f64,
    /// Master seed; scenario noise and every model initialisation derive
    /// from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_epochs() -> usize {
    100
}
fn default_warmup() -> usize {
    1000
}
fn default_period() -> usize {
    336
}
fn default_fading() -> f64 {
    0.99
}
fn default_seed() -> u64 {
    42
}
fn default_jitter() -> f64 {
    1.5
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>) -> RunConfig {
        RunConfig {
            scenario: scenario.into(),
            sensors: None,
            model: ModelConfig::default(),
            drift: DriftConfig::default(),
            epochs: default_epochs(),
            warmup_steps: default_warmup(),
            stl_period: default_period(),
            subtract_trend_only: false,
            fading_factor: default_fading(),
            classify_rule: ClassifyRule::default(),
            encoding_jitter: default_jitter(),
            seed: default_seed(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.drift.validate()?;
        if self.warmup_steps < self.model.timestep {
            return Err(Error::InvalidConfig(format!(
                "warmup_steps {} shorter than one window of {}",
                self.warmup_steps, self.model.timestep
            )));
        }
        if !(0.0..=1.0).contains(&self.fading_factor) {
            return Err(Error::InvalidConfig(format!(
                "fading factor {} outside [0, 1]",
                self.fading_factor
            )));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.model.dropout
            )));
        }
        Ok(())
    }
}
