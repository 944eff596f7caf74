//! Evidential (Dirichlet) head and the softmax / weighted cross-entropy
//! baseline head.
//!
//! Class index convention for the binary task: `0 = spoof`, `1 = bonafide`.
//! The detection score of a trial is the bonafide probability. All math is
//! written for general `K`.

use alloc::vec::Vec;

use crate::math;
use crate::specfun::{digamma, trigamma};

pub const SPOOF: usize = 0;
pub const BONAFIDE: usize = 1;
pub const NUM_CLASSES: usize = 2;

/// Upper bound on exponential evidence; keeps the Dirichlet strength finite.
pub const EXP_EVIDENCE_CAP: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeadError {
    #[error("logit {index} is not finite ({value})")]
    NonFiniteLogit { index: usize, value: f64 },
    #[error("target class {target} out of range for {classes} classes")]
    Target { target: usize, classes: usize },
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("class weight {index} = {value} must be finite and > 0")]
    Weight { index: usize, value: f64 },
    #[error("Dirichlet parameter alpha[{index}] = {value} must be finite and >= 1")]
    Alpha { index: usize, value: f64 },
    #[error("evidence[{index}] = {value} must be finite and >= 0")]
    Evidence { index: usize, value: f64 },
    #[error("need at least one class")]
    NoClasses,
}

fn check_logits(logits: &[f64]) -> Result<(), HeadError> {
    if logits.is_empty() {
        return Err(HeadError::NoClasses);
    }
    match logits.iter().position(|z| !z.is_finite()) {
        Some(index) => Err(HeadError::NonFiniteLogit { index, value: logits[index] }),
        None => Ok(()),
    }
}

fn check_target(target: usize, classes: usize) -> Result<(), HeadError> {
    if target < classes {
        Ok(())
    } else {
        Err(HeadError::Target { target, classes })
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), HeadError> {
    if got == expected {
        Ok(())
    } else {
        Err(HeadError::Length { what, got, expected })
    }
}

/// Nonnegative map from raw logits to evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EvidenceActivation {
    Relu,
    Softplus,
    Exponential,
}

impl EvidenceActivation {
    /// Fixed reporting order used by the ablation table.
    pub const ALL: [EvidenceActivation; 3] =
        [EvidenceActivation::Relu, EvidenceActivation::Exponential, EvidenceActivation::Softplus];

    pub fn name(self) -> &'static str {
        match self {
            EvidenceActivation::Relu => "relu",
            EvidenceActivation::Softplus => "softplus",
            EvidenceActivation::Exponential => "exponential",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(EvidenceActivation::Relu),
            "softplus" => Some(EvidenceActivation::Softplus),
            "exponential" | "exp" => Some(EvidenceActivation::Exponential),
            _ => None,
        }
    }

    pub fn evidence(self, z: f64) -> f64 {
        match self {
            EvidenceActivation::Relu => z.max(0.0),
            EvidenceActivation::Softplus => z.max(0.0) + math::ln1p(math::exp(-z.abs())),
            EvidenceActivation::Exponential => math::exp(z).min(EXP_EVIDENCE_CAP),
        }
    }

    /// d evidence / d z. ReLU uses subgradient 0 at z = 0; the exponential
    /// derivative vanishes once the cap is active.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            EvidenceActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            EvidenceActivation::Softplus => logistic(z),
            EvidenceActivation::Exponential => {
                let e = math::exp(z);
                if e < EXP_EVIDENCE_CAP {
                    e
                } else {
                    0.0
                }
            }
        }
    }
}

impl core::fmt::Display for EvidenceActivation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + math::exp(-z))
    } else {
        let e = math::exp(z);
        e / (1.0 + e)
    }
}

/// Per-class nonnegative evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(evidence: Vec<f64>) -> Result<Self, HeadError> {
        if evidence.is_empty() {
            return Err(HeadError::NoClasses);
        }
        for (index, &value) in evidence.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(HeadError::Evidence { index, value });
            }
        }
        Ok(Self(evidence))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn to_dirichlet(&self) -> DirichletParams {
        let alpha: Vec<f64> = self.0.iter().map(|e| e + 1.0).collect();
        let strength = alpha.iter().sum();
        DirichletParams { alpha, strength }
    }
}

/// Dirichlet concentration `alpha = evidence + 1` and its strength `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    strength: f64,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self, HeadError> {
        if alpha.is_empty() {
            return Err(HeadError::NoClasses);
        }
        for (index, &value) in alpha.iter().enumerate() {
            if !(value.is_finite() && value >= 1.0) {
                return Err(HeadError::Alpha { index, value });
            }
        }
        let strength = alpha.iter().sum();
        Ok(Self { alpha, strength })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn evidence(&self) -> EvidenceVector {
        EvidenceVector(self.alpha.iter().map(|a| a - 1.0).collect())
    }
}

/// Positive per-class loss weights.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, HeadError> {
        if weights.is_empty() {
            return Err(HeadError::NoClasses);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(HeadError::Weight { index, value });
            }
        }
        Ok(Self(weights))
    }

    pub fn uniform(classes: usize) -> Self {
        Self(alloc::vec![1.0; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

/// Spoof:bonafide = 1:9.
impl Default for ClassWeights {
    fn default() -> Self {
        Self(alloc::vec![1.0, 9.0])
    }
}

impl TryFrom<Vec<f64>> for ClassWeights {
    type Error = HeadError;
    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ClassWeights> for Vec<f64> {
    fn from(value: ClassWeights) -> Self {
        value.0
    }
}

/// Output of either head for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    /// `K / S`; `None` for the softmax head.
    pub uncertainty: Option<f64>,
    pub logits: Vec<f64>,
}

impl Prediction {
    /// Detection score: probability of the bonafide class.
    pub fn score(&self) -> f64 {
        self.probs[BONAFIDE]
    }
}

/// Which head turns logits into probabilities and a training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "activation", rename_all = "lowercase"))]
pub enum Head {
    Softmax,
    Evidential(EvidenceActivation),
}

impl Head {
    pub fn label(&self) -> alloc::string::String {
        match self {
            Head::Softmax => "baseline".into(),
            Head::Evidential(act) => alloc::format!("fadel-{}", act.name()),
        }
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, HeadError> {
    check_logits(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| math::exp(z - max)).collect();
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    Ok(p)
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + math::ln(logits.iter().map(|&z| math::exp(z - max)).sum::<f64>())
}

/// Weighted cross-entropy `-w_t log p_t` and its gradient w.r.t. the logits,
/// `w_t (p - y)`.
pub fn wce_loss(logits: &[f64], target: usize, weights: &ClassWeights) -> Result<(f64, Vec<f64>), HeadError> {
    check_logits(logits)?;
    check_target(target, logits.len())?;
    check_len("class weights", weights.as_slice().len(), logits.len())?;
    let w = weights.get(target);
    // -log p_t = logsumexp(z) - z_t; never forms p_t itself.
    let loss = w * (log_sum_exp(logits) - logits[target]);
    let mut grad = softmax(logits)?;
    grad[target] -= 1.0;
    for g in grad.iter_mut() {
        *g *= w;
    }
    Ok((loss, grad))
}

pub fn evidence_to_alpha(logits: &[f64], activation: EvidenceActivation) -> Result<DirichletParams, HeadError> {
    check_logits(logits)?;
    let alpha: Vec<f64> = logits.iter().map(|&z| activation.evidence(z) + 1.0).collect();
    let strength = alpha.iter().sum();
    Ok(DirichletParams { alpha, strength })
}

/// `u = K / S`.
pub fn uncertainty(params: &DirichletParams) -> f64 {
    params.classes() as f64 / params.strength
}

/// Dirichlet mean `alpha_k / S`.
pub fn dirichlet_mean(params: &DirichletParams) -> Vec<f64> {
    params.alpha.iter().map(|a| a / params.strength).collect()
}

/// Expected weighted cross-entropy under Dir(alpha):
/// `w_t (ψ(S) - ψ(alpha_t))`.
pub fn edl_loss(params: &DirichletParams, target: usize, weights: &ClassWeights) -> Result<f64, HeadError> {
    check_target(target, params.classes())?;
    check_len("class weights", weights.as_slice().len(), params.classes())?;
    // alpha >= 1 is guaranteed by construction, so the digamma calls cannot fail.
    let psi_s = digamma(params.strength).expect("strength >= K > 0");
    let psi_t = digamma(params.alpha[target]).expect("alpha >= 1");
    Ok(weights.get(target) * (psi_s - psi_t))
}

/// Gradient of the expected loss w.r.t. the Dirichlet parameters:
/// `w_t ψ′(S) - w_k [k = t] ψ′(alpha_k)`.
pub fn edl_loss_grad_alpha(
    params: &DirichletParams,
    target: usize,
    weights: &ClassWeights,
) -> Result<Vec<f64>, HeadError> {
    check_target(target, params.classes())?;
    check_len("class weights", weights.as_slice().len(), params.classes())?;
    let w = weights.get(target);
    let common = w * trigamma(params.strength).expect("strength >= K > 0");
    let mut grad = alloc::vec![common; params.classes()];
    grad[target] -= w * trigamma(params.alpha[target]).expect("alpha >= 1");
    Ok(grad)
}

/// Gradient of `edl_loss(evidence_to_alpha(logits))` w.r.t. the logits.
pub fn edl_loss_grad(
    logits: &[f64],
    activation: EvidenceActivation,
    target: usize,
    weights: &ClassWeights,
) -> Result<Vec<f64>, HeadError> {
    let params = evidence_to_alpha(logits, activation)?;
    let mut grad = edl_loss_grad_alpha(&params, target, weights)?;
    for (g, &z) in grad.iter_mut().zip(logits) {
        *g *= activation.derivative(z);
    }
    Ok(grad)
}

/// KL(Dir(alpha~) || Dir(1)) with the target's evidence removed
/// (`alpha~ = y + (1 - y) alpha`), and its gradient w.r.t. alpha.
///
/// Not part of the default objective; training enables it only when a
/// nonzero coefficient is configured.
pub fn kl_to_uniform(params: &DirichletParams, target: usize) -> Result<(f64, Vec<f64>), HeadError> {
    check_target(target, params.classes())?;
    let k = params.classes() as f64;
    let tilde: Vec<f64> = params.alpha.iter().enumerate().map(|(i, &a)| if i == target { 1.0 } else { a }).collect();
    let s: f64 = tilde.iter().sum();
    let psi_s = digamma(s).expect("s >= K");
    let tri_s = trigamma(s).expect("s >= K");
    let mut value = math::lgamma(s) - math::lgamma(k);
    let mut grad = Vec::with_capacity(tilde.len());
    for (i, &a) in tilde.iter().enumerate() {
        let psi_a = digamma(a).expect("alpha >= 1");
        value += -math::lgamma(a) + (a - 1.0) * (psi_a - psi_s);
        if i == target {
            grad.push(0.0);
        } else {
            grad.push((a - 1.0) * trigamma(a).expect("alpha >= 1") - (s - k) * tri_s);
        }
    }
    Ok((value, grad))
}

pub fn predict(logits: &[f64], head: Head) -> Result<Prediction, HeadError> {
    match head {
        Head::Softmax => Ok(Prediction { probs: softmax(logits)?, uncertainty: None, logits: logits.to_vec() }),
        Head::Evidential(act) => {
            let params = evidence_to_alpha(logits, act)?;
            Ok(Prediction {
                probs: dirichlet_mean(&params),
                uncertainty: Some(uncertainty(&params)),
                logits: logits.to_vec(),
            })
        }
    }
}

/// Training objective of a head: loss value and gradient w.r.t. the logits.
///
/// `kl_coefficient` only affects evidential heads.
pub fn head_loss(
    head: Head,
    logits: &[f64],
    target: usize,
    weights: &ClassWeights,
    kl_coefficient: f64,
) -> Result<(f64, Vec<f64>), HeadError> {
    match head {
        Head::Softmax => wce_loss(logits, target, weights),
        Head::Evidential(act) => {
            let params = evidence_to_alpha(logits, act)?;
            let mut loss = edl_loss(&params, target, weights)?;
            let mut grad_alpha = edl_loss_grad_alpha(&params, target, weights)?;
            if kl_coefficient > 0.0 {
                let (kl, kl_grad) = kl_to_uniform(&params, target)?;
                loss += kl_coefficient * kl;
                for (g, k) in grad_alpha.iter_mut().zip(kl_grad) {
                    *g += kl_coefficient * k;
                }
            }
            for (g, &z) in grad_alpha.iter_mut().zip(logits) {
                *g *= act.derivative(z);
            }
            Ok((loss, grad_alpha))
        }
    }
}
