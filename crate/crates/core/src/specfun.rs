//! Digamma, trigamma and Dirichlet sampling.
//!
//! Both polygamma functions shift the argument upward with the recurrence
//! until it reaches [`ASYMPTOTIC_FROM`], then evaluate the Bernoulli-number
//! asymptotic series. The small recurrence terms are accumulated before the
//! dominant `1/x` (or `1/x²`) term so that tiny arguments keep their absolute
//! accuracy.

use alloc::vec::Vec;

use crate::math;
use crate::rng::RngStream;

/// Shift threshold for the asymptotic expansions.
pub const ASYMPTOTIC_FROM: f64 = 8.0;

/// B_{2k} / (2k), k = 1..7.
const DIGAMMA_SERIES: [f64; 7] =
    [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0];

/// B_{2k}, k = 1..7.
const TRIGAMMA_SERIES: [f64; 7] =
    [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("argument {0} is outside the domain (must be finite and > 0)")]
    NonPositive(f64),
    #[error("Dirichlet concentration alpha[{index}] = {value} must be finite and > 0")]
    Concentration { index: usize, value: f64 },
    #[error("Dirichlet needs at least one concentration parameter")]
    Empty,
}

fn check_positive(x: f64) -> Result<(), DomainError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(DomainError::NonPositive(x))
    }
}

/// ψ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64, DomainError> {
    check_positive(x)?;
    if x >= ASYMPTOTIC_FROM {
        return Ok(digamma_asymptotic(x));
    }
    // ψ(x) = ψ(x + n) - Σ_{i<n} 1/(x + i); the i = 0 term is subtracted last.
    let mut shifted = x + 1.0;
    let mut tail = 0.0;
    while shifted < ASYMPTOTIC_FROM {
        tail += 1.0 / shifted;
        shifted += 1.0;
    }
    Ok((digamma_asymptotic(shifted) - tail) - 1.0 / x)
}

fn digamma_asymptotic(x: f64) -> f64 {
    let inv2 = 1.0 / (x * x);
    let mut poly = 0.0;
    for &c in DIGAMMA_SERIES.iter().rev() {
        poly = poly * inv2 + c;
    }
    math::ln(x) - 0.5 / x - poly * inv2
}

/// ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64, DomainError> {
    check_positive(x)?;
    if x >= ASYMPTOTIC_FROM {
        return Ok(trigamma_asymptotic(x));
    }
    let mut shifted = x + 1.0;
    let mut tail = 0.0;
    while shifted < ASYMPTOTIC_FROM {
        tail += 1.0 / (shifted * shifted);
        shifted += 1.0;
    }
    let (hi, lo) = inverse_square(x);
    Ok(hi + (lo + (trigamma_asymptotic(shifted) + tail)))
}

/// 1/x² as an unevaluated sum `hi + lo` (error-free products via fma).
fn inverse_square(x: f64) -> (f64, f64) {
    let q = 1.0 / x;
    // 1/x = q (1 + r) with r = 1 - q x exactly representable via fma.
    let r = math::fma(-q, x, 1.0);
    let hi = q * q;
    let hi_err = math::fma(q, q, -hi);
    (hi, hi_err + 2.0 * hi * r)
}

fn trigamma_asymptotic(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut poly = 0.0;
    for &b in TRIGAMMA_SERIES.iter().rev() {
        poly = poly * inv2 + b;
    }
    inv + 0.5 * inv2 + poly * inv2 * inv
}

/// Gamma(shape, 1) deviate in log space.
///
/// Marsaglia-Tsang squeeze for shape ≥ 1; shapes below one use the boosting
/// identity G(a) = G(a + 1) · U^{1/a}, kept as a logarithm so that very small
/// shapes do not underflow to zero.
pub fn sample_log_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boosted = sample_log_gamma(shape + 1.0, rng);
        return boosted + math::ln(rng.open01()) / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / math::sqrt(9.0 * d);
    loop {
        let z = rng.normal();
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.open01();
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 {
            return math::ln(d * v);
        }
        let log_v = math::ln(v);
        if math::ln(u) < 0.5 * z2 + d * (1.0 - v + log_v) {
            return math::ln(d) + log_v;
        }
    }
}

/// Gamma(shape, 1) deviate.
pub fn sample_gamma(shape: f64, rng: &mut RngStream) -> Result<f64, DomainError> {
    check_positive(shape)?;
    Ok(math::exp(sample_log_gamma(shape, rng)))
}

/// One draw from Dir(alpha), returned as a probability vector.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, DomainError> {
    if alpha.is_empty() {
        return Err(DomainError::Empty);
    }
    for (index, &value) in alpha.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(DomainError::Concentration { index, value });
        }
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| sample_log_gamma(a, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|&l| math::exp(l - max)).collect();
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    Ok(p)
}
