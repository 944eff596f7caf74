//! Trial rows shared by protocol files, score files and the metrics.

use alloc::string::{String, ToString};

/// Attack id used for bonafide rows.
pub const BONAFIDE_ATTACK: &str = "-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Key {
    Bonafide,
    Spoof,
}

impl Key {
    pub fn as_str(self) -> &'static str {
        match self {
            Key::Bonafide => "bonafide",
            Key::Spoof => "spoof",
        }
    }

    pub fn parse(s: &str) -> Option<Key> {
        match s {
            "bonafide" => Some(Key::Bonafide),
            "spoof" => Some(Key::Spoof),
            _ => None,
        }
    }

    /// Class index in the head's output (`0 = spoof`, `1 = bonafide`).
    pub fn class_index(self) -> usize {
        match self {
            Key::Spoof => crate::evidential::SPOOF,
            Key::Bonafide => crate::evidential::BONAFIDE,
        }
    }
}

impl core::fmt::Display for Key {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrialError {
    #[error("utterance {utterance}: key {key} does not match attack id {attack:?}")]
    KeyMismatch { utterance: String, key: Key, attack: String },
}

/// One trial: protocol row plus optional score and uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub speaker: String,
    pub utterance: String,
    attack: String,
    key: Key,
    pub score: Option<f64>,
    pub uncertainty: Option<f64>,
}

impl TrialRecord {
    /// Enforces `key == bonafide` iff `attack == "-"`.
    pub fn new(
        speaker: impl Into<String>,
        utterance: impl Into<String>,
        attack: impl Into<String>,
        key: Key,
    ) -> Result<Self, TrialError> {
        let attack = attack.into();
        let utterance = utterance.into();
        if (key == Key::Bonafide) != (attack == BONAFIDE_ATTACK) {
            return Err(TrialError::KeyMismatch { utterance, key, attack });
        }
        Ok(Self { speaker: speaker.into(), utterance, attack, key, score: None, uncertainty: None })
    }

    pub fn bonafide(speaker: impl Into<String>, utterance: impl Into<String>) -> Self {
        Self::new(speaker, utterance, BONAFIDE_ATTACK, Key::Bonafide).expect("consistent")
    }

    /// Panics if `attack` is the bonafide marker.
    pub fn spoof(speaker: impl Into<String>, utterance: impl Into<String>, attack: impl ToString) -> Self {
        Self::new(speaker, utterance, attack.to_string(), Key::Spoof).expect("spoof attack id must not be \"-\"")
    }

    pub fn attack(&self) -> &str {
        &self.attack
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_uncertainty(mut self, u: f64) -> Self {
        self.uncertainty = Some(u);
        self
    }
}
