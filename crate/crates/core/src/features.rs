//! Log-mel statistics front-end.
//!
//! waveform → frames (no padding) → periodic Hann window → radix-2 FFT →
//! power spectrum → Slaney-normalized triangular mel filterbank →
//! `ln(max(energy, floor))` → per-band mean and standard deviation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("FFT length {0} is not a power of two >= 2")]
    FftLength(usize),
    #[error("waveform has {got} samples, need at least one frame of {need}")]
    TooShort { got: usize, need: usize },
    #[error("invalid feature config: {0}")]
    Config(&'static str),
    #[error("feature vector has {got} entries, expected {expected}")]
    Dim { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self { re: r * math::cos(theta), im: r * math::sin(theta) }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        math::sqrt(self.norm_sqr())
    }

    pub fn arg(self) -> f64 {
        libm::atan2(self.im, self.re)
    }

    #[inline]
    fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// Precomputed twiddles and bit-reversal table for one FFT length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self, FeatureError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(FeatureError::FftLength(n));
        }
        // Each twiddle is evaluated directly (no recurrence) to keep
        // per-bin error at the rounding level.
        let twiddles = (0..n / 2).map(|k| Complex::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)).collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n).map(|i| i.reverse_bits() >> (usize::BITS - bits)).collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place transform. The inverse is unnormalized-then-scaled by `1/n`.
    pub fn process(&self, buf: &mut [Complex], inverse: bool) {
        assert_eq!(buf.len(), self.n, "buffer length must match plan");
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w.im = -w.im;
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half].mul(w);
                    buf[start + k] = Complex::new(a.re + b.re, a.im + b.im);
                    buf[start + k + half] = Complex::new(a.re - b.re, a.im - b.im);
                }
            }
            len <<= 1;
        }
        if inverse {
            let scale = 1.0 / self.n as f64;
            for v in buf.iter_mut() {
                v.re *= scale;
                v.im *= scale;
            }
        }
    }

    /// Non-negative-frequency bins `0..=n/2` of a real frame.
    pub fn real_forward(&self, frame: &[f64]) -> Result<Vec<Complex>, FeatureError> {
        if frame.len() != self.n {
            return Err(FeatureError::FftLength(frame.len()));
        }
        let mut buf: Vec<Complex> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.process(&mut buf, false);
        buf.truncate(self.n / 2 + 1);
        Ok(buf)
    }
}

/// FFT of a real frame whose length is a power of two; returns `n/2 + 1` bins.
pub fn fft_real(frame: &[f64]) -> Result<Vec<Complex>, FeatureError> {
    FftPlan::new(frame.len())?.real_forward(frame)
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * math::cos(2.0 * PI * i as f64 / n as f64)).collect()
}

/// Slaney mel scale: linear below 1 kHz (200/3 Hz per mel), logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    let logstep = math::ln(6.4) / 27.0;
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + math::ln(hz / MIN_LOG_HZ) / logstep
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    let logstep = math::ln(6.4) / 27.0;
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * math::exp(logstep * (mel - MIN_LOG_MEL))
    } else {
        F_SP * mel
    }
}

/// `bands x (n_fft/2 + 1)` triangular filters, each scaled by
/// `2 / (f_hi - f_lo)` so every filter has unit area in Hz.
pub fn mel_filterbank(sample_rate: f64, n_fft: usize, bands: usize, fmin: f64, fmax: f64) -> Vec<Vec<f64>> {
    let bins = n_fft / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> =
        (0..bands + 2).map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (bands + 1) as f64)).collect();
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * sample_rate / n_fft as f64).collect();
    (0..bands)
        .map(|b| {
            let (lo, center, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let norm = 2.0 / (hi - lo);
            freqs
                .iter()
                .map(|&f| {
                    let rise = (f - lo) / (center - lo);
                    let fall = (hi - f) / (hi - center);
                    norm * rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FeatureConfig {
    pub sample_rate: f64,
    pub frame_length: usize,
    pub hop: usize,
    pub mel_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            frame_length: 512,
            hop: 256,
            mel_bands: 40,
            fmin: 20.0,
            fmax: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.frame_length < 2 || !self.frame_length.is_power_of_two() {
            return Err(FeatureError::Config("frame length must be a power of two"));
        }
        if self.hop == 0 {
            return Err(FeatureError::Config("hop must be > 0"));
        }
        if self.mel_bands == 0 {
            return Err(FeatureError::Config("need at least one mel band"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(FeatureError::Config("sample rate must be > 0"));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate / 2.0) {
            return Err(FeatureError::Config("need 0 <= fmin < fmax <= Nyquist"));
        }
        if !(self.log_floor > 0.0) {
            return Err(FeatureError::Config("log floor must be > 0"));
        }
        Ok(())
    }

    /// Output dimension: mean and std per band.
    pub fn dim(&self) -> usize {
        2 * self.mel_bands
    }
}

/// Reusable extractor holding the window, FFT plan and filterbank.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    plan: FftPlan,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self, FeatureError> {
        config.validate()?;
        Ok(Self {
            plan: FftPlan::new(config.frame_length)?,
            window: hann(config.frame_length),
            filters: mel_filterbank(
                config.sample_rate,
                config.frame_length,
                config.mel_bands,
                config.fmin,
                config.fmax,
            ),
            config,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    /// Log-mel energies, one row per frame.
    pub fn log_mel_frames(&self, waveform: &[f64]) -> Result<Vec<Vec<f64>>, FeatureError> {
        let n = self.config.frame_length;
        if waveform.len() < n {
            return Err(FeatureError::TooShort { got: waveform.len(), need: n });
        }
        let frames = 1 + (waveform.len() - n) / self.config.hop;
        let mut buf = vec![Complex::default(); n];
        let mut power = vec![0.0; n / 2 + 1];
        let mut out = Vec::with_capacity(frames);
        for f in 0..frames {
            let seg = &waveform[f * self.config.hop..f * self.config.hop + n];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new(x * w, 0.0);
            }
            self.plan.process(&mut buf, false);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p = b.norm_sqr();
            }
            out.push(
                self.filters
                    .iter()
                    .map(|filt| {
                        let e: f64 = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
                        math::ln(e.max(self.config.log_floor))
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    /// `[mean_1..mean_B, std_1..std_B]` of the log-mel frames (population std).
    pub fn extract(&self, waveform: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let frames = self.log_mel_frames(waveform)?;
        let bands = self.config.mel_bands;
        let count = frames.len() as f64;
        // Offsets from the first frame keep constant bands exact.
        let first = frames[0].clone();
        let mut mean = vec![0.0; bands];
        for fr in &frames {
            for ((m, v), f) in mean.iter_mut().zip(fr).zip(&first) {
                *m += v - f;
            }
        }
        for (m, f) in mean.iter_mut().zip(&first) {
            *m = f + *m / count;
        }
        let mut var = vec![0.0; bands];
        for fr in &frames {
            for ((s, v), m) in var.iter_mut().zip(fr).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut out = mean;
        out.extend(var.iter().map(|s| math::sqrt(s / count)));
        Ok(out)
    }
}

pub fn extract(waveform: &[f64], config: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    FeatureExtractor::new(*config)?.extract(waveform)
}

/// Per-dimension affine standardization fitted on training features.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Dimensions with (near) zero spread get unit scale.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = math::sqrt(s / n);
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if row.len() != self.dim() {
            return Err(FeatureError::Dim { got: row.len(), expected: self.dim() });
        }
        Ok(row.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect())
    }
}
