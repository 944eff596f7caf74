//! Versioned JSON checkpoints, written atomically.

use std::fs;
use std::io::Write;
use std::path::Path;

use fadel_core::net::Dense;
use fadel_core::{Detector, FeatureConfig, Head, MlpModel, Standardizer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const FORMAT: &str = "fadel-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    /// Per layer: weights (outputs x inputs, row-major), then bias.
    pub params: Vec<f64>,
    pub standardizer: Standardizer,
    pub head: Head,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub best_epoch: usize,
    pub corpus_fingerprint: String,
}

impl Checkpoint {
    pub fn new(
        detector: &Detector,
        features: FeatureConfig,
        train: TrainConfig,
        seed: u64,
        best_epoch: usize,
        corpus_fingerprint: String,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            dims: detector.model.dims(),
            params: detector.model.params(),
            standardizer: detector.standardizer.clone(),
            head: detector.head,
            features,
            train,
            seed,
            best_epoch,
            corpus_fingerprint,
        }
    }

    pub fn detector(&self) -> Result<Detector> {
        let bad = |m: String| Error::Input(format!("checkpoint: {m}"));
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(bad(format!("invalid dims {:?}", self.dims)));
        }
        let expected: usize = self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if self.params.len() != expected {
            return Err(bad(format!("{} parameters, dims {:?} need {expected}", self.params.len(), self.dims)));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite parameter".into()));
        }
        let s = &self.standardizer;
        if s.mean.len() != self.dims[0] || s.scale.len() != self.dims[0] {
            return Err(bad("standardizer does not match the input width".into()));
        }
        if self.features.dim() != self.dims[0] {
            return Err(bad(format!(
                "feature config yields {} dims, model expects {}",
                self.features.dim(),
                self.dims[0]
            )));
        }
        let mut rest = self.params.as_slice();
        let layers = self
            .dims
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let (weights, tail) = rest.split_at(inputs * outputs);
                let (bias, tail) = tail.split_at(outputs);
                rest = tail;
                Dense { inputs, outputs, weights: weights.to_vec(), bias: bias.to_vec() }
            })
            .collect();
        Ok(Detector { standardizer: s.clone(), model: MlpModel::from_layers(layers), head: self.head })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let h: Header = serde_json::from_str(text).map_err(|e| Error::input(path, e))?;
        if h.format != FORMAT {
            return Err(Error::input(path, format!("not a checkpoint (format {:?})", h.format)));
        }
        if h.version != VERSION {
            return Err(Error::input(
                path,
                format!("checkpoint version {} is not supported (expected {VERSION})", h.version),
            ));
        }
        serde_json::from_str(text).map_err(|e| Error::input(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(path, &fs::read_to_string(path).at(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

/// Writes to a temporary file in the target directory, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).at(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).at(dir)?;
    tmp.write_all(bytes).at(tmp.path())?;
    tmp.as_file().sync_all().at(tmp.path())?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
