//! Experiment configuration (TOML).
//!
//! ```toml
//! corpus = "corpus"          # directory written by `gen-data`
//! output = "runs/fadel"
//! seeds = [1, 2, 3]
//! bins = 20                  # histogram bins over [0, 1]
//!
//! [train]
//! epochs = 100
//! head = { kind = "evidential", activation = "exponential" }   # or { kind = "softmax" }
//!
//! [features]                 # log-mel front-end, all fields optional
//! [asv]                      # ASV operating point for t-DCF, all fields optional
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use fadel_core::{AsvOperatingPoint, FeatureConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_bins() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub asv: AsvOperatingPoint,
}

impl ExperimentConfig {
    pub fn new(corpus: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            output: output.into(),
            seeds: default_seeds(),
            bins: default_bins(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            asv: AsvOperatingPoint::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds: duplicate seed".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins: must be >= 1".into()));
        }
        self.features.validate().map_err(|e| Error::Config(format!("features: {e}")))?;
        self.train.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        self.asv.validate().map_err(|e| Error::Config(format!("asv: {e}")))?;
        Ok(())
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.corpus = base.join(&c.corpus);
        c.output = base.join(&c.output);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }
}
