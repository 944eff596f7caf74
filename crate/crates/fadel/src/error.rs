use std::io;
use std::path::{Path, PathBuf};

use fadel_core::features::FeatureError;
use fadel_core::metrics::MetricsError;
use fadel_core::synth::SynthError;
use fadel_core::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("input: {0}")]
    Input(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Input(_) => 5,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn input(path: impl AsRef<Path>, msg: impl std::fmt::Display) -> Self {
        Error::Input(format!("{}: {msg}", path.as_ref().display()))
    }
}

/// Attaches a path to `io::Result`s.
pub trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}

impl From<SynthError> for Error {
    fn from(e: SynthError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Error::Config(e.to_string()),
            TrainError::NonFinite { .. } | TrainError::Head(_) => Error::Numeric(e.to_string()),
            _ => Error::Input(e.to_string()),
        }
    }
}

impl From<MetricsError> for Error {
    fn from(e: MetricsError) -> Self {
        Error::Input(e.to_string())
    }
}

impl From<FeatureError> for Error {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Config(_) | FeatureError::FftLength(_) => Error::Config(e.to_string()),
            _ => Error::Input(e.to_string()),
        }
    }
}
