//! Two-phase MRI slice pipeline for MGMT methylation prediction.
//!
//! * [`imaging`] reads and writes 8-bit slices and dataset manifests.
//! * [`preprocess`] gates slices on entropy and SNR and equalizes them.
//! * [`tensor`] is a small NHWC tensor library with a reverse-mode tape.
//! * [`models`] builds the convolutional autoencoder (CAMP-I) and the
//!   classifier (CAMP-II) and moves encoder weights between them.
//! * [`losses`] holds Dice, RMSE, cross-entropy and the adaptive sparse
//!   regularizer.
//! * [`training`] runs both training phases and k-fold cross-validation.
//! * [`eval`] computes confusion-matrix metrics, ROC/AUC and activation maps.
//! * [`gradsuite`] finite-difference checks every op and both networks.
//! * [`synthdata`] generates labelled phantom datasets.
//!
//! Numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! gradient checks); the aliases below name the common instantiations.

pub mod eval;
pub mod gradsuite;
pub mod imaging;
pub mod losses;
pub mod models;
pub mod preprocess;
mod scalar;
pub mod synthdata;
pub mod tensor;
pub mod training;

pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Tape64 = tensor::Tape<f64>;

pub type Model32 = models::ModelGraph<f32>;
pub type Model64 = models::ModelGraph<f64>;
