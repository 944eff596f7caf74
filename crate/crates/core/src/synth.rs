//! Deterministic synthetic spoofing corpus.
//!
//! Bonafide utterances are harmonic stacks with vibrato, a syllable-rate
//! amplitude envelope and low-level colored noise. Spoofed utterances are
//! bonafide-like signals passed through one parametric "attack algorithm".
//! Every utterance owns a seed derived from the manifest seed, so rendering
//! is order-independent and reproducible.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::features::{Complex, FftPlan};
use crate::math;
use crate::rng::{derive_seed, RngStream};
use crate::trial::{Key, TrialRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid corpus manifest: {0}")]
    Manifest(String),
    #[error("attack {id}: {reason}")]
    Attack { id: String, reason: String },
    #[error("unknown attack kind {0:?}")]
    UnknownKind(String),
    #[error("unknown attack id {0:?}")]
    UnknownAttack(String),
}

fn manifest_err(msg: impl Into<String>) -> SynthError {
    SynthError::Manifest(msg.into())
}

/// Bonafide voice generator settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VoiceParams {
    /// Range of speaker fundamental frequencies (Hz).
    pub f0: [f64; 2],
    /// Per-utterance spread of f0 around the speaker value (fraction).
    pub f0_spread: f64,
    pub partials: [u32; 2],
    /// Spectral tilt exponent: partial k has amplitude k^-tilt.
    pub tilt: [f64; 2],
    /// Vibrato depth as a fraction of f0; `[0, 0]` disables vibrato.
    pub vibrato_depth: [f64; 2],
    pub vibrato_rate: [f64; 2],
    /// Syllable-rate amplitude modulation.
    pub syllable_rate: [f64; 2],
    pub syllable_depth: [f64; 2],
    /// Noise RMS relative to the harmonic RMS.
    pub noise_level: [f64; 2],
    /// One-pole lowpass coefficient shaping the noise color.
    pub noise_color: [f64; 2],
    pub peak: [f64; 2],
}

impl Default for VoiceParams {
    fn default() -> Self {
        Self {
            f0: [90.0, 260.0],
            f0_spread: 0.08,
            partials: [3, 8],
            tilt: [0.6, 1.4],
            vibrato_depth: [0.005, 0.03],
            vibrato_rate: [4.0, 7.0],
            syllable_rate: [2.5, 5.0],
            syllable_depth: [0.3, 0.8],
            noise_level: [0.02, 0.06],
            noise_color: [0.0, 0.7],
            peak: [0.3, 0.9],
        }
    }
}

/// Hard ceiling on generated amplitudes.
pub const PEAK_LIMIT: f64 = 0.9;

fn draw(rng: &mut RngStream, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.uniform(range[0], range[1])
    }
}

fn draw_int(rng: &mut RngStream, range: [u32; 2]) -> u32 {
    rng.range_inclusive(range[0] as u64, range[1] as u64) as u32
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    math::sqrt(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
}

/// Signal-to-noise ratio (dB) of `processed` relative to `reference`.
pub fn snr_db(reference: &[f64], processed: &[f64]) -> f64 {
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    let noise: f64 = reference.iter().zip(processed).map(|(a, b)| (a - b) * (a - b)).sum();
    if noise == 0.0 {
        return f64::INFINITY;
    }
    10.0 * math::log10(signal / noise)
}

/// One bonafide-like utterance: mono, peak in `params.peak` (≤ 0.9).
pub fn synth_bonafide(
    rng: &mut RngStream,
    duration: f64,
    f0_range: [f64; 2],
    params: &VoiceParams,
    sample_rate: f64,
) -> Vec<f64> {
    let n = math::round(duration * sample_rate).max(1.0) as usize;
    let f0 = draw(rng, f0_range);
    let partials = draw_int(rng, params.partials) as usize;
    let tilt = draw(rng, params.tilt);
    let vib_depth = draw(rng, params.vibrato_depth);
    let vib_rate = draw(rng, params.vibrato_rate);
    let vib_phase = rng.uniform(0.0, 2.0 * PI);
    let syl_rate = draw(rng, params.syllable_rate);
    let syl_depth = draw(rng, params.syllable_depth);
    let syl_phase = rng.uniform(0.0, 2.0 * PI);
    let noise_level = draw(rng, params.noise_level);
    let color = draw(rng, params.noise_color);
    let target_peak = draw(rng, params.peak).min(PEAK_LIMIT);

    // Partial k (1-based) keeps a fixed phase offset; sin(kθ + φ_k) is built
    // from the rotation (cos kθ, sin kθ) to avoid per-partial transcendental calls.
    let amps: Vec<f64> = (1..=partials).map(|k| math::powf(k as f64, -tilt)).collect();
    let offsets: Vec<(f64, f64)> = (0..partials)
        .map(|_| {
            let phi = rng.uniform(0.0, 2.0 * PI);
            (math::cos(phi), math::sin(phi))
        })
        .collect();

    let mut voiced = vec![0.0; n];
    let mut theta = rng.uniform(0.0, 2.0 * PI);
    let dt = 1.0 / sample_rate;
    let fade = (0.02 * sample_rate) as usize;
    for (i, out) in voiced.iter_mut().enumerate() {
        let t = i as f64 * dt;
        let (c1, s1) = (math::cos(theta), math::sin(theta));
        let (mut ck, mut sk) = (c1, s1);
        let mut acc = 0.0;
        for (a, &(cp, sp)) in amps.iter().zip(&offsets) {
            acc += a * (sk * cp + ck * sp);
            let next_c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = next_c;
        }
        let env = 1.0 - syl_depth * 0.5 * (1.0 + math::cos(2.0 * PI * syl_rate * t + syl_phase));
        let edge = if i < fade {
            i as f64 / fade as f64
        } else if n - i <= fade {
            (n - i) as f64 / fade as f64
        } else {
            1.0
        };
        *out = acc * env * edge;
        let inst_f0 = f0 * (1.0 + vib_depth * math::sin(2.0 * PI * vib_rate * t + vib_phase));
        theta += 2.0 * PI * inst_f0 * dt;
        if theta > 2.0 * PI {
            theta -= 2.0 * PI;
        }
    }

    let voiced_rms = rms(&voiced).max(1e-12);
    let mut state = 0.0;
    let mut noise: Vec<f64> = (0..n)
        .map(|_| {
            state = color * state + (1.0 - color) * rng.normal();
            state
        })
        .collect();
    let noise_scale = noise_level * voiced_rms / rms(&noise).max(1e-12);
    for (v, w) in voiced.iter_mut().zip(noise.iter_mut()) {
        *v += noise_scale * *w;
    }
    scale_to_peak(&mut voiced, target_peak);
    voiced
}

fn scale_to_peak(x: &mut [f64], target: f64) {
    let p = peak(x);
    if p > 0.0 {
        let g = target / p;
        for v in x.iter_mut() {
            *v *= g;
        }
    }
}

/// Rescales to a target RMS, then scales down if the peak would exceed 0.9.
pub fn normalize_level(x: &mut [f64], target_rms: f64) {
    let r = rms(x);
    if r > 0.0 {
        let g = target_rms / r;
        for v in x.iter_mut() {
            *v *= g;
        }
    }
    if peak(x) > PEAK_LIMIT {
        scale_to_peak(x, PEAK_LIMIT);
    }
}

/// Transform family plus its parameter ranges (inclusive).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields))]
pub enum AttackKind {
    /// Uniform quantization of [-1, 1] to 2^bits levels.
    Bitcrush { bits: [u32; 2] },
    /// Random phase rotation of every STFT bin (Hann, 50 % overlap).
    PhaseScramble { block: usize, amount: [f64; 2] },
    /// Swaps each segment with one at most `radius` segments ahead.
    FrameShuffle { segment_ms: [f64; 2], radius: [u32; 2] },
    /// Windowed-sinc lowpass, decimation by `factor`, linear re-interpolation.
    LowpassResample { factor: [u32; 2] },
    /// Clipping at `fraction` times the input peak.
    HardClip { fraction: [f64; 2] },
    /// Mains hum with harmonics at a given SNR.
    AdditiveHum { freq: [f64; 2], snr_db: [f64; 2], harmonics: u32 },
}

impl AttackKind {
    pub const NAMES: [&'static str; 6] =
        ["bitcrush", "phase-scramble", "frame-shuffle", "lowpass-resample", "hard-clip", "additive-hum"];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Bitcrush { .. } => "bitcrush",
            AttackKind::PhaseScramble { .. } => "phase-scramble",
            AttackKind::FrameShuffle { .. } => "frame-shuffle",
            AttackKind::LowpassResample { .. } => "lowpass-resample",
            AttackKind::HardClip { .. } => "hard-clip",
            AttackKind::AdditiveHum { .. } => "additive-hum",
        }
    }

    /// Default parameter ranges for a transform name.
    pub fn default_for(name: &str) -> Result<Self, SynthError> {
        Ok(match name {
            "bitcrush" => AttackKind::Bitcrush { bits: [3, 5] },
            "phase-scramble" => AttackKind::PhaseScramble { block: 1024, amount: [0.5, 0.9] },
            "frame-shuffle" => AttackKind::FrameShuffle { segment_ms: [15.0, 40.0], radius: [1, 4] },
            "lowpass-resample" => AttackKind::LowpassResample { factor: [3, 5] },
            "hard-clip" => AttackKind::HardClip { fraction: [0.15, 0.5] },
            "additive-hum" => AttackKind::AdditiveHum { freq: [50.0, 60.0], snr_db: [6.0, 20.0], harmonics: 5 },
            other => return Err(SynthError::UnknownKind(other.into())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackSpec {
    pub id: String,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: AttackKind,
}

fn ordered<T: PartialOrd>(r: &[T; 2]) -> bool {
    r[0] <= r[1]
}

impl AttackSpec {
    pub fn new(id: impl Into<String>, kind: AttackKind) -> Self {
        Self { id: id.into(), kind }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |reason: &str| SynthError::Attack { id: self.id.clone(), reason: reason.into() };
        if self.id.is_empty() || self.id == crate::trial::BONAFIDE_ATTACK || self.id.contains(char::is_whitespace) {
            return Err(bad("id must be non-empty, not \"-\", without whitespace"));
        }
        match &self.kind {
            AttackKind::Bitcrush { bits } => {
                if !ordered(bits) || bits[0] < 1 || bits[1] > 16 {
                    return Err(bad("bits must be an ordered range within 1..=16"));
                }
            }
            AttackKind::PhaseScramble { block, amount } => {
                if *block < 16 || !block.is_power_of_two() {
                    return Err(bad("block must be a power of two >= 16"));
                }
                if !ordered(amount) || amount[0] < 0.0 || amount[1] > 1.0 {
                    return Err(bad("amount must be an ordered range within [0, 1]"));
                }
            }
            AttackKind::FrameShuffle { segment_ms, radius } => {
                if !ordered(segment_ms) || !(segment_ms[0] > 0.0) || !ordered(radius) {
                    return Err(bad("segment_ms must be positive and ranges ordered"));
                }
            }
            AttackKind::LowpassResample { factor } => {
                if !ordered(factor) || factor[0] < 2 || factor[1] > 64 {
                    return Err(bad("factor must be an ordered range within 2..=64"));
                }
            }
            AttackKind::HardClip { fraction } => {
                if !ordered(fraction) || !(fraction[0] > 0.0) || fraction[1] > 1.0 {
                    return Err(bad("fraction must be an ordered range within (0, 1]"));
                }
            }
            AttackKind::AdditiveHum { freq, snr_db, harmonics } => {
                if !ordered(freq) || !(freq[0] > 0.0) || !ordered(snr_db) || *harmonics == 0 {
                    return Err(bad("hum needs positive freq, ordered snr range, >= 1 harmonic"));
                }
            }
        }
        Ok(())
    }
}

/// Quantizes to `2^bits` evenly spaced levels spanning [-1, 1].
pub fn bitcrush(x: &[f64], bits: u32) -> Vec<f64> {
    let steps = ((1u64 << bits) - 1) as f64;
    x.iter()
        .map(|&v| {
            let u = (v.clamp(-1.0, 1.0) + 1.0) / 2.0;
            math::round(u * steps) / steps * 2.0 - 1.0
        })
        .collect()
}

pub fn hard_clip(x: &[f64], level: f64) -> Vec<f64> {
    x.iter().map(|&v| v.clamp(-level, level)).collect()
}

/// Segment-local shuffle; `radius = 0` is the identity.
pub fn frame_shuffle(x: &[f64], segment: usize, radius: usize, rng: &mut RngStream) -> Vec<f64> {
    let segment = segment.max(1);
    let count = x.len() / segment;
    let mut order: Vec<usize> = (0..count).collect();
    if radius > 0 {
        for i in 0..count {
            let j = (i + rng.below(radius as u64 + 1) as usize).min(count - 1);
            order.swap(i, j);
        }
    }
    let mut out = Vec::with_capacity(x.len());
    for &s in &order {
        out.extend_from_slice(&x[s * segment..(s + 1) * segment]);
    }
    out.extend_from_slice(&x[count * segment..]);
    out
}

/// STFT phase randomization; `amount = 0` reconstructs the input.
pub fn phase_scramble(x: &[f64], block: usize, amount: f64, rng: &mut RngStream) -> Vec<f64> {
    let plan = FftPlan::new(block).expect("validated block size");
    let hop = block / 2;
    let window: Vec<f64> = crate::features::hann(block);
    // Pad so every output sample is covered by two windows summing to one.
    let mut padded = vec![0.0; hop];
    padded.extend_from_slice(x);
    padded.resize(padded.len() + block, 0.0);
    let mut out = vec![0.0; padded.len()];
    let mut buf = vec![Complex::default(); block];
    let mut start = 0;
    while start + block <= padded.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[start + i] * window[i], 0.0);
        }
        plan.process(&mut buf, false);
        for k in 1..hop {
            let phi = amount * rng.uniform(-PI, PI);
            let rot = Complex::from_polar(1.0, phi);
            let v = buf[k];
            buf[k] = Complex::new(v.re * rot.re - v.im * rot.im, v.re * rot.im + v.im * rot.re);
            buf[block - k] = Complex::new(buf[k].re, -buf[k].im);
        }
        plan.process(&mut buf, true);
        for (i, b) in buf.iter().enumerate() {
            out[start + i] += b.re;
        }
        start += hop;
    }
    out[hop..hop + x.len()].to_vec()
}

/// Decimate by `factor` after a windowed-sinc lowpass, then linearly
/// interpolate back to the original length.
pub fn lowpass_resample(x: &[f64], factor: usize) -> Vec<f64> {
    let half = 8 * factor;
    let cutoff = 0.45 / factor as f64;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 { 2.0 * cutoff } else { math::sin(2.0 * PI * cutoff * m) / (PI * m) };
            let w = 0.42 - 0.5 * math::cos(PI * i as f64 / half as f64)
                + 0.08 * math::cos(2.0 * PI * i as f64 / half as f64);
            sinc * w
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    let n = x.len();
    let decimated: Vec<f64> = (0..n.div_ceil(factor))
        .map(|j| {
            let center = j * factor;
            let mut acc = 0.0;
            for (t, &h) in taps.iter().enumerate() {
                let idx = center as isize + t as isize - half as isize;
                if idx >= 0 && (idx as usize) < n {
                    acc += h * x[idx as usize];
                }
            }
            acc / gain
        })
        .collect();
    (0..n)
        .map(|i| {
            let pos = i as f64 / factor as f64;
            let j = pos as usize;
            let frac = pos - j as f64;
            let a = decimated[j];
            let b = *decimated.get(j + 1).unwrap_or(&a);
            a + frac * (b - a)
        })
        .collect()
}

/// Adds hum `Σ_k k^-1 sin(2π k f t + φ_k)` at the requested SNR.
pub fn additive_hum(x: &[f64], freq: f64, snr: f64, harmonics: u32, sample_rate: f64, rng: &mut RngStream) -> Vec<f64> {
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.uniform(0.0, 2.0 * PI)).collect();
    let hum: Vec<f64> = (0..x.len())
        .map(|i| {
            let t = i as f64 / sample_rate;
            phases
                .iter()
                .enumerate()
                .map(|(k, &p)| math::sin(2.0 * PI * (k + 1) as f64 * freq * t + p) / (k + 1) as f64)
                .sum()
        })
        .collect();
    let scale = rms(x) / rms(&hum).max(1e-12) * math::powf(10.0, -snr / 20.0);
    x.iter().zip(&hum).map(|(a, h)| a + scale * h).collect()
}

/// Draws concrete parameters from the spec's ranges and applies the transform.
/// Output has the input's length.
pub fn apply_attack(
    x: &[f64],
    spec: &AttackSpec,
    rng: &mut RngStream,
    sample_rate: f64,
) -> Result<Vec<f64>, SynthError> {
    spec.validate()?;
    Ok(match &spec.kind {
        AttackKind::Bitcrush { bits } => bitcrush(x, draw_int(rng, *bits)),
        AttackKind::PhaseScramble { block, amount } => {
            let a = draw(rng, *amount);
            phase_scramble(x, *block, a, rng)
        }
        AttackKind::FrameShuffle { segment_ms, radius } => {
            let seg = math::round(draw(rng, *segment_ms) * 1e-3 * sample_rate).max(1.0) as usize;
            let r = draw_int(rng, *radius) as usize;
            frame_shuffle(x, seg, r, rng)
        }
        AttackKind::LowpassResample { factor } => lowpass_resample(x, draw_int(rng, *factor) as usize),
        AttackKind::HardClip { fraction } => {
            let level = draw(rng, *fraction) * peak(x);
            hard_clip(x, level)
        }
        AttackKind::AdditiveHum { freq, snr_db, harmonics } => {
            let f = draw(rng, *freq);
            let s = draw(rng, *snr_db);
            additive_hum(x, f, s, *harmonics, sample_rate, rng)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|sp| sp.name() == s)
    }

    fn tag(self) -> char {
        match self {
            Split::Train => 'T',
            Split::Dev => 'D',
            Split::Eval => 'E',
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SplitSpec {
    pub utterances: usize,
    pub speakers: usize,
    pub attacks: Vec<String>,
}

/// Corpus layout and generation settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CorpusManifest {
    pub seed: u64,
    pub sample_rate: u32,
    /// Utterance duration range in seconds.
    pub duration: [f64; 2],
    /// Fraction of bonafide utterances in every split.
    pub bonafide_fraction: f64,
    /// Target RMS range applied to every utterance after synthesis.
    pub level_rms: [f64; 2],
    #[cfg_attr(feature = "serde", serde(default))]
    pub voice: VoiceParams,
    pub attacks: Vec<AttackSpec>,
    pub train: SplitSpec,
    pub dev: SplitSpec,
    pub eval: SplitSpec,
}

impl Default for CorpusManifest {
    fn default() -> Self {
        let ids = ["T01", "T02", "T03", "T04", "T05", "T06"];
        let attacks = ids
            .iter()
            .zip(AttackKind::NAMES)
            .map(|(id, name)| AttackSpec::new(*id, AttackKind::default_for(name).expect("known")))
            .collect();
        let seen: Vec<String> = ids[..3].iter().map(|s| String::from(*s)).collect();
        let all: Vec<String> = ids.iter().map(|s| String::from(*s)).collect();
        Self {
            seed: 2019,
            sample_rate: 16_000,
            duration: [1.0, 4.0],
            bonafide_fraction: 0.1,
            level_rms: [0.02, 0.12],
            voice: VoiceParams::default(),
            attacks,
            train: SplitSpec { utterances: 3000, speakers: 10, attacks: seen.clone() },
            dev: SplitSpec { utterances: 500, speakers: 5, attacks: seen },
            eval: SplitSpec { utterances: 1500, speakers: 10, attacks: all },
        }
    }
}

/// One utterance to render.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedUtterance {
    pub split: Split,
    pub record: TrialRecord,
    pub seed: u64,
    pub duration: f64,
    pub speaker_f0: f64,
}

impl CorpusManifest {
    pub fn split(&self, split: Split) -> &SplitSpec {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Eval => &self.eval,
        }
    }

    pub fn attack(&self, id: &str) -> Result<&AttackSpec, SynthError> {
        self.attacks.iter().find(|a| a.id == id).ok_or_else(|| SynthError::UnknownAttack(id.into()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.sample_rate == 0 {
            return Err(manifest_err("sample_rate must be > 0"));
        }
        if !(ordered(&self.duration) && self.duration[0] > 0.0) {
            return Err(manifest_err("duration must be an ordered positive range"));
        }
        let min_samples = self.duration[0] * self.sample_rate as f64;
        if min_samples < 2048.0 {
            return Err(manifest_err("minimum duration is too short for feature extraction"));
        }
        if !(self.bonafide_fraction > 0.0 && self.bonafide_fraction < 1.0) {
            return Err(manifest_err("bonafide_fraction must lie in (0, 1)"));
        }
        if !(ordered(&self.level_rms) && self.level_rms[0] > 0.0) {
            return Err(manifest_err("level_rms must be an ordered positive range"));
        }
        let v = &self.voice;
        if !(ordered(&v.f0) && v.f0[0] > 0.0 && v.f0[1] * (1.0 + v.f0_spread) < self.sample_rate as f64 / 2.0) {
            return Err(manifest_err("voice.f0 must be an ordered positive range below Nyquist"));
        }
        if !(ordered(&v.partials) && v.partials[0] >= 1) {
            return Err(manifest_err("voice.partials must be an ordered range >= 1"));
        }
        if !(ordered(&v.peak) && v.peak[0] > 0.0 && v.peak[1] <= PEAK_LIMIT) {
            return Err(manifest_err("voice.peak must be an ordered range within (0, 0.9]"));
        }
        let mut ids = BTreeSet::new();
        for a in &self.attacks {
            a.validate()?;
            if !ids.insert(a.id.as_str()) {
                return Err(manifest_err(alloc::format!("duplicate attack id {}", a.id)));
            }
        }
        for split in Split::ALL {
            let s = self.split(split);
            if s.utterances < 2 || s.speakers == 0 {
                return Err(manifest_err(alloc::format!("{} needs >= 2 utterances and >= 1 speaker", split.name())));
            }
            let (b, sp) = self.class_counts(split);
            if b == 0 || sp == 0 {
                return Err(manifest_err(alloc::format!("{} must contain both classes", split.name())));
            }
            if s.attacks.is_empty() {
                return Err(manifest_err(alloc::format!("{} lists no attacks", split.name())));
            }
            for id in &s.attacks {
                if !ids.contains(id.as_str()) {
                    return Err(SynthError::UnknownAttack(id.clone()));
                }
            }
        }
        let seen: BTreeSet<&str> = self.train.attacks.iter().chain(&self.dev.attacks).map(String::as_str).collect();
        if self.eval.attacks.iter().all(|a| seen.contains(a.as_str())) {
            return Err(manifest_err("eval must contain at least one attack absent from train and dev"));
        }
        Ok(())
    }

    /// (bonafide, spoof) utterance counts of a split.
    pub fn class_counts(&self, split: Split) -> (usize, usize) {
        let n = self.split(split).utterances;
        let b = (math::round(n as f64 * self.bonafide_fraction) as usize).clamp(1, n.saturating_sub(1).max(1));
        (b, n - b)
    }

    /// Attack ids seen in eval but never in train or dev.
    pub fn unseen_attacks(&self) -> Vec<String> {
        let seen: BTreeSet<&str> = self.train.attacks.iter().chain(&self.dev.attacks).map(String::as_str).collect();
        self.eval.attacks.iter().filter(|a| !seen.contains(a.as_str())).cloned().collect()
    }

    /// Deterministic utterance list for a split, in protocol order.
    pub fn plan(&self, split: Split) -> Result<Vec<PlannedUtterance>, SynthError> {
        self.validate()?;
        let spec = self.split(split);
        let (n_bona, n_spoof) = self.class_counts(split);
        let mut labels: Vec<Option<&str>> = vec![None; n_bona];
        labels.extend((0..n_spoof).map(|j| Some(spec.attacks[j % spec.attacks.len()].as_str())));
        let mut order_rng = RngStream::new(derive_seed(self.seed, &[split.index(), 0]));
        order_rng.shuffle(&mut labels);

        let voice = &self.voice;
        let speaker_f0: Vec<f64> = (0..spec.speakers)
            .map(|s| {
                let mut r = RngStream::new(derive_seed(self.seed, &[split.index(), 1, s as u64]));
                r.uniform(voice.f0[0], voice.f0[1])
            })
            .collect();

        let offset = match split {
            Split::Train => 1_000_000,
            Split::Dev => 2_000_000,
            Split::Eval => 3_000_000,
        };
        labels
            .into_iter()
            .enumerate()
            .map(|(i, attack)| {
                let seed = derive_seed(self.seed, &[split.index(), 2, i as u64]);
                let mut r = RngStream::new(seed);
                let speaker_idx = r.below(spec.speakers as u64) as usize;
                let duration = draw(&mut r, self.duration);
                let speaker = alloc::format!("SPK_{}{:03}", split.tag(), speaker_idx);
                let utt = alloc::format!("LA_{}_{}", split.tag(), offset + i);
                let record = match attack {
                    None => TrialRecord::bonafide(speaker, utt),
                    Some(a) => TrialRecord::new(speaker, utt, a, Key::Spoof)
                        .map_err(|e| manifest_err(alloc::format!("{e}")))?,
                };
                Ok(PlannedUtterance { split, record, seed, duration, speaker_f0: speaker_f0[speaker_idx] })
            })
            .collect()
    }

    /// Renders one planned utterance.
    pub fn render(&self, utt: &PlannedUtterance) -> Result<Vec<f64>, SynthError> {
        let sr = self.sample_rate as f64;
        let base = RngStream::new(utt.seed);
        let spread = self.voice.f0_spread;
        let f0_range = [utt.speaker_f0 * (1.0 - spread), utt.speaker_f0 * (1.0 + spread)];
        let mut wave = synth_bonafide(&mut base.derive(&[1]), utt.duration, f0_range, &self.voice, sr);
        if utt.record.key() == Key::Spoof {
            let spec = self.attack(utt.record.attack())?;
            wave = apply_attack(&wave, spec, &mut base.derive(&[2]), sr)?;
        }
        let target = draw(&mut base.derive(&[3]), self.level_rms);
        normalize_level(&mut wave, target);
        Ok(wave)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voice() -> VoiceParams {
        VoiceParams::default()
    }

    #[test]
    fn bonafide_is_deterministic_and_bounded() {
        let a = synth_bonafide(&mut RngStream::new(4), 1.0, [100.0, 200.0], &voice(), 16000.0);
        let b = synth_bonafide(&mut RngStream::new(4), 1.0, [100.0, 200.0], &voice(), 16000.0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16000);
        assert!(a.iter().all(|v| v.abs() <= 0.9));
    }

    #[test]
    fn bitcrush_lattice() {
        let x: Vec<f64> = (0..200).map(|i| math::sin(i as f64 * 0.1) * 0.95).collect();
        let y = bitcrush(&x, 3);
        for v in y {
            let level = (v + 1.0) / 2.0 * 7.0;
            assert!((level - math::round(level)).abs() < 1e-12, "{v} off lattice");
        }
    }

    #[test]
    fn hard_clip_ceiling() {
        let x: Vec<f64> = (0..200).map(|i| math::sin(i as f64 * 0.05)).collect();
        let y = hard_clip(&x, 0.3);
        assert_eq!(peak(&y), 0.3);
        let spec = AttackSpec::new("C", AttackKind::HardClip { fraction: [0.3, 0.3] });
        let y = apply_attack(&x, &spec, &mut RngStream::new(0), 16000.0).unwrap();
        assert!((peak(&y) - 0.3 * peak(&x)).abs() < 1e-15);
    }

    #[test]
    fn identity_shuffle() {
        let x: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(frame_shuffle(&x, 37, 0, &mut RngStream::new(1)), x);
        let spec = AttackSpec::new("S", AttackKind::FrameShuffle { segment_ms: [10.0, 20.0], radius: [0, 0] });
        assert_eq!(apply_attack(&x, &spec, &mut RngStream::new(2), 16000.0).unwrap(), x);
    }

    #[test]
    fn zero_scramble_reconstructs() {
        let x = synth_bonafide(&mut RngStream::new(9), 0.5, [150.0, 150.0], &voice(), 16000.0);
        let y = phase_scramble(&x, 512, 0.0, &mut RngStream::new(1));
        assert_eq!(y.len(), x.len());
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert_eq!(AttackKind::default_for("vocoder"), Err(SynthError::UnknownKind("vocoder".into())));
        for name in AttackKind::NAMES {
            assert_eq!(AttackKind::default_for(name).unwrap().name(), name);
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            AttackKind::Bitcrush { bits: [0, 3] },
            AttackKind::Bitcrush { bits: [5, 3] },
            AttackKind::PhaseScramble { block: 1000, amount: [0.1, 0.2] },
            AttackKind::LowpassResample { factor: [1, 2] },
            AttackKind::HardClip { fraction: [0.0, 0.5] },
            AttackKind::AdditiveHum { freq: [50.0, 60.0], snr_db: [1.0, 2.0], harmonics: 0 },
        ];
        for k in bad {
            assert!(AttackSpec::new("X", k).validate().is_err());
        }
        assert!(AttackSpec::new("-", AttackKind::Bitcrush { bits: [4, 4] }).validate().is_err());
    }

    #[test]
    fn default_manifest_is_valid() {
        let m = CorpusManifest::default();
        m.validate().unwrap();
        assert_eq!(m.unseen_attacks(), vec!["T04", "T05", "T06"]);
        assert_eq!(m.class_counts(Split::Train), (300, 2700));
    }

    #[test]
    fn manifest_without_unseen_attack_rejected() {
        let mut m = CorpusManifest::default();
        m.eval.attacks = m.train.attacks.clone();
        assert!(matches!(m.validate(), Err(SynthError::Manifest(_))));
        let mut m = CorpusManifest::default();
        m.dev.attacks.push("T09".into());
        assert_eq!(m.validate(), Err(SynthError::UnknownAttack("T09".into())));
        let mut m = CorpusManifest::default();
        m.attacks.push(m.attacks[0].clone());
        assert!(m.validate().is_err());
    }
}
