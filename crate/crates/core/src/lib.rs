//! Uncertainty-aware fake-audio detection with an evidential (Dirichlet)
//! output head.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! detector: special functions ([`specfun`]), the evidential and softmax
//! heads ([`evidential`]), a small MLP backbone and trainer ([`net`],
//! [`train`]), the log-mel front-end ([`features`]), the synthetic spoofing
//! corpus ([`synth`]) and the anti-spoofing metrics ([`metrics`]). File
//! formats and the command-line tool live in the `fadel` crate.

#![no_std]
// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod math;

pub mod evidential;
pub mod features;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod specfun;
pub mod synth;
pub mod train;
pub mod trial;

pub use evidential::{ClassWeights, DirichletParams, EvidenceActivation, EvidenceVector, Head, Prediction};
pub use features::{FeatureConfig, FeatureExtractor, Standardizer};
pub use metrics::{AsvOperatingPoint, MetricsReport, ScoreSet};
pub use net::{Matrix, MlpModel};
pub use rng::RngStream;
pub use synth::{AttackKind, AttackSpec, CorpusManifest, Split};
pub use train::{Dataset, Detector, TrainConfig};
pub use trial::{Key, TrialRecord};
