//! Mini-batch Adam training with per-epoch dev-set EER and best-checkpoint
//! selection.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::evidential::{
    head_loss, predict, ClassWeights, EvidenceActivation, Head, HeadError, Prediction, NUM_CLASSES,
};
use crate::features::{FeatureError, Standardizer};
use crate::metrics::{eer_from_scores, MetricsError};
use crate::net::{Adam, Matrix, MlpModel, NetError};
use crate::rng::{derive_seed, RngStream};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (loss {loss}); layer (weight, bias) norms: {layer_norms:?}"
    )]
    NonFinite { epoch: usize, batch: usize, loss: f64, layer_norms: Vec<(f64, f64)> },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Feature rows with class labels (`0 = spoof`, `1 = bonafide`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self, TrainError> {
        if features.rows() != labels.len() {
            return Err(TrainError::Data(alloc::format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(TrainError::Data(alloc::format!("label {l} out of range")));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Data("non-finite feature value".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub head: Head,
    pub class_weights: ClassWeights,
    /// Coefficient of the optional KL regularizer (evidential heads only);
    /// 0 disables it.
    pub kl_weight: f64,
    /// The KL coefficient ramps linearly to `kl_weight` over this many epochs.
    pub kl_anneal_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            head: Head::Evidential(EvidenceActivation::Exponential),
            class_weights: ClassWeights::default(),
            kl_weight: 0.0,
            kl_anneal_epochs: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be > 0");
        }
        if self.class_weights.as_slice().len() != NUM_CLASSES {
            return bad("class_weights needs one weight per class");
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return bad("kl_weight must be finite and >= 0");
        }
        Ok(())
    }

    pub fn dims(&self, input: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend_from_slice(&self.hidden);
        d.push(NUM_CLASSES);
        d
    }

    fn kl_coefficient(&self, epoch: usize) -> f64 {
        if self.kl_weight == 0.0 {
            return 0.0;
        }
        let ramp =
            if self.kl_anneal_epochs == 0 { 1.0 } else { ((epoch + 1) as f64 / self.kl_anneal_epochs as f64).min(1.0) };
        self.kl_weight * ramp
    }
}

/// Standardizer + backbone + head: everything needed to score raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub standardizer: Standardizer,
    pub model: MlpModel,
    pub head: Head,
}

impl Detector {
    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Predictions for raw (unstandardized) feature rows.
    pub fn predict_rows<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<Prediction>, TrainError> {
        let standardized: Vec<Vec<f64>> =
            rows.iter().map(|r| self.standardizer.apply(r.as_ref())).collect::<Result<_, _>>()?;
        self.predict_standardized(&Matrix::from_rows(&standardized))
    }

    fn predict_standardized(&self, batch: &Matrix) -> Result<Vec<Prediction>, TrainError> {
        if batch.rows() == 0 {
            return Ok(Vec::new());
        }
        let logits = self.model.infer(batch)?;
        (0..logits.rows()).map(|i| Ok(predict(logits.row(i), self.head)?)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Percent.
    pub dev_eer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Checkpoint with the best dev EER (ties: lower dev loss, then earlier).
    pub detector: Detector,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

fn standardize(data: &Dataset, s: &Standardizer) -> Result<Matrix, TrainError> {
    let mut out = Matrix::zeros(data.len(), data.dim());
    for i in 0..data.len() {
        out.row_mut(i).copy_from_slice(&s.apply(data.features.row(i))?);
    }
    Ok(out)
}

fn mean_loss(
    model: &MlpModel,
    head: Head,
    weights: &ClassWeights,
    x: &Matrix,
    labels: &[usize],
    kl: f64,
) -> Result<(f64, Matrix), TrainError> {
    let logits = model.infer(x)?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += head_loss(head, logits.row(i), y, weights, kl)?.0;
    }
    Ok((total / labels.len().max(1) as f64, logits))
}

/// Trains one seed. The standardizer is fitted on `train`.
pub fn train(
    config: &TrainConfig,
    seed: u64,
    train_set: &Dataset,
    dev_set: &Dataset,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(TrainError::Data("train and dev sets must be non-empty".into()));
    }
    if train_set.dim() != dev_set.dim() {
        return Err(TrainError::Data("train and dev feature dimensions differ".into()));
    }
    let standardizer = Standardizer::fit(&(0..train_set.len()).map(|i| train_set.features.row(i)).collect::<Vec<_>>());
    let x_train = standardize(train_set, &standardizer)?;
    let x_dev = standardize(dev_set, &standardizer)?;

    let mut model = MlpModel::init(&config.dims(train_set.dim()), &mut RngStream::new(derive_seed(seed, &[0xA11C])))?;
    let mut opt = Adam::new(&model, config.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, f64, usize, MlpModel)> = None;

    for epoch in 0..config.epochs {
        let kl = config.kl_coefficient(epoch);
        // Data order depends only on (seed, epoch), never on the head.
        let mut shuffle_rng = RngStream::new(derive_seed(seed, &[0x5F0F, epoch as u64]));
        order.sort_unstable();
        shuffle_rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = x_train.select_rows(chunk);
            let cache = model.forward(&x)?;
            if cache.logits().as_slice().iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch: epoch + 1,
                    batch: b,
                    loss: f64::NAN,
                    layer_norms: model.layer_norms(),
                });
            }
            let mut upstream = Matrix::zeros(chunk.len(), NUM_CLASSES);
            let mut batch_loss = 0.0;
            let scale = 1.0 / chunk.len() as f64;
            for (r, &i) in chunk.iter().enumerate() {
                let (l, g) =
                    head_loss(config.head, cache.logits().row(r), train_set.labels[i], &config.class_weights, kl)?;
                batch_loss += l;
                for (u, gv) in upstream.row_mut(r).iter_mut().zip(g) {
                    *u = gv * scale;
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch: epoch + 1,
                    batch: b,
                    loss: batch_loss,
                    layer_norms: model.layer_norms(),
                });
            }
            epoch_loss += batch_loss;
            let grads = model.backward(&cache, &upstream)?;
            opt.update(&mut model, &grads);
            if !model.all_finite() {
                return Err(TrainError::NonFinite {
                    epoch: epoch + 1,
                    batch: b,
                    loss: batch_loss,
                    layer_norms: model.layer_norms(),
                });
            }
        }

        let (dev_loss, dev_logits) =
            mean_loss(&model, config.head, &config.class_weights, &x_dev, &dev_set.labels, kl)?;
        let (mut bona, mut spoof) = (Vec::new(), Vec::new());
        for (i, &y) in dev_set.labels.iter().enumerate() {
            let s = predict(dev_logits.row(i), config.head)?.score();
            if y == crate::evidential::BONAFIDE {
                bona.push(s);
            } else {
                spoof.push(s);
            }
        }
        let dev_eer = eer_from_scores(&bona, &spoof)?.eer;
        log.push(EpochLog { epoch: epoch + 1, train_loss: epoch_loss / train_set.len() as f64, dev_loss, dev_eer });

        let better = match &best {
            None => true,
            Some((e, l, _, _)) => dev_eer < *e || (dev_eer == *e && dev_loss < *l),
        };
        if better {
            best = Some((dev_eer, dev_loss, epoch + 1, model.clone()));
        }
    }

    let (_, _, best_epoch, model) = best.expect("epochs >= 1");
    Ok(TrainOutcome { detector: Detector { standardizer, model, head: config.head }, best_epoch, log })
}
