//! 16-bit PCM mono WAV.

use std::path::Path;

use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32767.0;

fn spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int }
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::input(path, other),
    }
}

pub fn to_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16
}

pub fn write(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let mut w = hound::WavWriter::create(path, spec(sample_rate)).map_err(|e| wav_err(path, e))?;
    for &s in samples {
        w.write_sample(to_pcm16(s)).map_err(|e| wav_err(path, e))?;
    }
    w.finalize().map_err(|e| wav_err(path, e))
}

/// Reads a mono PCM16 file; returns samples scaled to [-1, 1] and the sample rate.
pub fn read(path: &Path) -> Result<(Vec<f64>, u32)> {
    let r = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let s = r.spec();
    if s.channels != 1 || s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(Error::input(
            path,
            format!("expected mono 16-bit PCM, got {} ch / {} bit", s.channels, s.bits_per_sample),
        ));
    }
    let samples = r
        .into_samples::<i16>()
        .map(|v| v.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e))?;
    Ok((samples, s.sample_rate))
}
