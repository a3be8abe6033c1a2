//! Run configuration: defaults, overridden by a TOML file, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrastive::ContrastConfig;
use crate::data::{io::write_atomic, DownsampleConfig, SynthSpec};
use crate::error::{Error, Result};
use crate::icc::TrainConfig;
use crate::metrics::LinearEvalConfig;
use crate::network::BackboneConfig;

/// Name of the environment variable that roots relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "ICC_SEG_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub labeled_fraction: f64,
    pub min_labeled: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            labeled_fraction: 0.1,
            min_labeled: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset directory for training and evaluation.
    pub dataset: Option<PathBuf>,
    /// Generator settings for `synth-gen`.
    pub synth: SynthSpec,
    pub split: SplitConfig,
    /// `input_dim = 0` is filled in from the dataset.
    pub backbone: BackboneConfig,
    pub contrast: ContrastConfig,
    pub downsample: DownsampleConfig,
    pub train: TrainConfig,
    pub probe: LinearEvalConfig,
    /// Probe the representation after every contrast-classify iteration.
    pub probe_each_iteration: bool,
    pub output_dir: PathBuf,
    /// Root of every random stream.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synth: SynthSpec::default(),
            split: SplitConfig::default(),
            backbone: BackboneConfig::desk(0),
            contrast: ContrastConfig::default(),
            downsample: DownsampleConfig::default(),
            train: TrainConfig::default(),
            probe: LinearEvalConfig::default(),
            probe_each_iteration: false,
            output_dir: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Propagate the root seed into the sections that carry their own copy
    /// and keep the probe window equal to the training window.
    pub fn sync(&mut self) {
        self.train.seed = self.seed;
        self.probe.probe.seed = self.seed;
        self.probe.w0 = self.downsample.w0;
    }

    /// Output directory, placed under `$ICC_SEG_OUTPUT_ROOT` when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        if !(self.split.labeled_fraction > 0.0 && self.split.labeled_fraction <= 1.0) {
            return Err(Error::Config(format!("labeled_fraction {} not in (0, 1]", self.split.labeled_fraction)));
        }
        self.contrast.validate()?;
        self.downsample.validate()?;
        self.train.validate()
    }

    /// Write `config.toml` into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.toml");
        write_atomic(&path, self.to_toml()?.as_bytes())?;
        Ok(path)
    }
}
