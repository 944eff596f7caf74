//! Protocol (`SPEAKER UTT - ATTACK KEY`) and score (`UTT ATTACK KEY SCORE [UNCERTAINTY]`)
//! text files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fadel_core::{Key, TrialRecord};

use crate::error::{Error, IoContext, Result};

/// Speaker field for trials read from score files, which carry none.
pub const UNKNOWN_SPEAKER: &str = "-";

fn parse_key(path: &Path, line: usize, s: &str) -> Result<Key> {
    Key::parse(s).ok_or_else(|| Error::input(path, format!("line {line}: unknown key {s:?}")))
}

fn record(path: &Path, line: usize, speaker: &str, utt: &str, attack: &str, key: Key) -> Result<TrialRecord> {
    TrialRecord::new(speaker, utt, attack, key).map_err(|e| Error::input(path, format!("line {line}: {e}")))
}

pub fn parse_protocol(path: &Path, text: &str) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let line = i + 1;
        if fields.len() != 5 {
            return Err(Error::input(path, format!("line {line}: expected 5 columns, found {}", fields.len())));
        }
        let key = parse_key(path, line, fields[4])?;
        out.push(record(path, line, fields[0], fields[1], fields[3], key)?);
    }
    Ok(out)
}

pub fn read_protocol(path: &Path) -> Result<Vec<TrialRecord>> {
    parse_protocol(path, &fs::read_to_string(path).at(path)?)
}

pub fn format_protocol(trials: &[TrialRecord]) -> String {
    let mut s = String::new();
    for t in trials {
        writeln!(s, "{} {} - {} {}", t.speaker, t.utterance, t.attack(), t.key()).unwrap();
    }
    s
}

fn parse_value(path: &Path, line: usize, what: &str, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::input(path, format!("line {line}: bad {what} {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::input(path, format!("line {line}: non-finite {what}")));
    }
    Ok(v)
}

/// Every row must agree on whether the uncertainty column is present.
pub fn parse_scores(path: &Path, text: &str) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let line = i + 1;
        if !matches!(fields.len(), 4 | 5) {
            return Err(Error::input(path, format!("line {line}: expected 4 or 5 columns, found {}", fields.len())));
        }
        if *width.get_or_insert(fields.len()) != fields.len() {
            return Err(Error::input(path, format!("line {line}: inconsistent column count")));
        }
        let key = parse_key(path, line, fields[2])?;
        let mut t = record(path, line, UNKNOWN_SPEAKER, fields[0], fields[1], key)?
            .with_score(parse_value(path, line, "score", fields[3])?);
        if let Some(u) = fields.get(4) {
            t = t.with_uncertainty(parse_value(path, line, "uncertainty", u)?);
        }
        out.push(t);
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<TrialRecord>> {
    parse_scores(path, &fs::read_to_string(path).at(path)?)
}

/// Writes the uncertainty column only when every trial has one.
pub fn format_scores(trials: &[TrialRecord]) -> String {
    let with_u = !trials.is_empty() && trials.iter().all(|t| t.uncertainty.is_some());
    let mut s = String::new();
    for t in trials {
        let score = t.score.expect("scored trial");
        write!(s, "{} {} {} {}", t.utterance, t.attack(), t.key(), score).unwrap();
        if with_u {
            write!(s, " {}", t.uncertainty.unwrap()).unwrap();
        }
        s.push('\n');
    }
    s
}
