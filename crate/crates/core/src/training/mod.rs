//! Phase I (denoising autoencoder), phase II (classifier with transferred
//! encoder and adaptive sparse regularizer), Adam, and patient-level k-fold
//! cross-validation.
//!
//! All randomness comes from ChaCha8 streams derived from the configured
//! seed, and the loops are single-threaded, so a (seed, data, config) triple
//! fixes every logged number and every checkpoint byte.

mod adam;
mod autoencoder;
mod classifier;
mod config;
mod data;
mod kfold;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use autoencoder::{train_autoencoder, AutoencoderTrainer};
pub use classifier::{
    cross_validate, score_slices, train_classifier, ClassifierTrainer, CvReport, FoldResult, StepRecord,
};
pub use config::{ReconLoss, TrainConfig, CONFIG_KEYS};
pub use data::{labeled, load_slices, SliceRecord};
pub use kfold::{kfold_split, Fold, FoldPlan};

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::imaging::ImagingError;
use crate::losses::LossError;
use crate::models::ModelError;
use crate::tensor::{Tensor, TensorError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("slice {index} of patient {patient} has no label")]
    Unlabeled { patient: String, index: usize },
    #[error("slice shape {found:?} differs from {expected:?}")]
    SliceShape { expected: Vec<usize>, found: Vec<usize> },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("cannot split {patients} patients into {k} folds")]
    Folds { k: usize, patients: usize },
    #[error("layer {0:?} cannot be regularized: expected [batch, units] activations")]
    SparsityLayer(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// ChaCha stream ids, so initialization, shuffling and corruption draw
/// from independent sequences of the same seed.
pub(crate) const STREAM_SHUFFLE: u64 = 1;
pub(crate) const STREAM_NOISE: u64 = 2;
pub(crate) const STREAM_DROPOUT: u64 = 3;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Adds i.i.d. `N(0, sigma^2)` noise and clamps to `[0, 1]`. `sigma == 0`
/// returns the batch unchanged without drawing.
pub fn add_gaussian_noise<T: Scalar>(batch: &Tensor<T>, sigma: f64, rng: &mut impl Rng) -> Tensor<T> {
    if sigma == 0.0 {
        return batch.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let data = batch
        .data()
        .iter()
        .map(|v| T::from_f64_lossy((v.to_f64_lossy() + normal.sample(rng)).clamp(0.0, 1.0)))
        .collect();
    Tensor::new(batch.shape(), data).expect("same shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// One row of the training log. Unused fields stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: Option<f64>,
    pub rmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub sum_kl: Option<f64>,
    pub beta2: Option<f64>,
}

impl EpochRecord {
    pub(crate) fn new(epoch: usize, split: Split) -> Self {
        Self { epoch, split, loss: None, rmse: None, accuracy: None, sum_kl: None, beta2: None }
    }
}

pub const LOG_HEADER: &str = "epoch,split,loss,rmse,accuracy,sum_kl,beta2";

pub fn log_csv(records: &[EpochRecord]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    let mut s = format!("{LOG_HEADER}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.split.as_str(),
            f(r.loss),
            f(r.rmse),
            f(r.accuracy),
            f(r.sum_kl),
            f(r.beta2)
        );
    }
    s
}

/// Stacks `[s, s, 1]` slices selected by `idx` into a batch.
pub(crate) fn gather<T: Scalar>(images: &[&Tensor<T>], idx: &[usize]) -> Result<Tensor<T>> {
    let items: Vec<Tensor<T>> = idx.iter().map(|&i| images[i].clone()).collect();
    Ok(Tensor::stack(&items)?)
}

/// Common input shape of a non-empty slice list.
pub(crate) fn slice_size<T: Scalar>(images: &[&Tensor<T>], what: &'static str) -> Result<usize> {
    let first = images.first().ok_or(TrainError::EmptyDataset(what))?;
    let shape = first.shape().to_vec();
    if shape.len() != 3 || shape[0] != shape[1] || shape[2] != 1 {
        return Err(TrainError::SliceShape { expected: vec![shape[0], shape[0], 1], found: shape });
    }
    if let Some(bad) = images.iter().find(|t| t.shape() != shape.as_slice()) {
        return Err(TrainError::SliceShape { expected: shape, found: bad.shape().to_vec() });
    }
    Ok(shape[0])
}
