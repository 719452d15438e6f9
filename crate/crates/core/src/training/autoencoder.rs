use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{
    adam_step, add_gaussian_noise, gather, slice_size, stream, AdamState, EpochRecord, ReconLoss, Result, Split,
    TrainConfig, TrainError, STREAM_DROPOUT, STREAM_NOISE, STREAM_SHUFFLE,
};
use crate::losses::{dice_loss_op, mse_op};
use crate::models::{build_camp1, ModelGraph, ModelOptions};
use crate::tensor::{Mode, Tape, Tensor, Var};
use crate::Scalar;

/// Phase-I training loop, one epoch per [`run_epoch`](Self::run_epoch).
///
/// Each step corrupts a batch with Gaussian noise and fits the clean batch.
/// The train record reports the mean step loss and the RMSE of the
/// training-pass outputs against the clean targets; the validation record
/// is an inference pass over the validation slices.
pub struct AutoencoderTrainer<'a, T: Scalar> {
    pub config: TrainConfig,
    pub model: ModelGraph<T>,
    pub history: Vec<EpochRecord>,
    adam: AdamState<T>,
    train: Vec<&'a Tensor<T>>,
    val: Vec<&'a Tensor<T>>,
    shuffle_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a, T: Scalar> AutoencoderTrainer<'a, T> {
    /// `train` and `val` hold `[s, s, 1]` slices in `[0, 1]`; `val` may be
    /// empty.
    pub fn new(train: &'a [Tensor<T>], val: &'a [Tensor<T>], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let train: Vec<&Tensor<T>> = train.iter().collect();
        let val: Vec<&Tensor<T>> = val.iter().collect();
        let size = slice_size(&train, "no training slices")?;
        if !val.is_empty() && slice_size(&val, "validation")? != size {
            return Err(TrainError::SliceShape { expected: vec![size, size, 1], found: val[0].shape().to_vec() });
        }
        let options = ModelOptions { leaky_alpha: config.leaky_alpha, ..ModelOptions::with_size(size) };
        let model = build_camp1(config.seed, &options)?;
        let adam = AdamState::new(&model.params);
        Ok(Self {
            config: config.clone(),
            model,
            history: Vec::new(),
            adam,
            train,
            val,
            shuffle_rng: stream(config.seed, STREAM_SHUFFLE),
            noise_rng: stream(config.seed, STREAM_NOISE),
            dropout_rng: stream(config.seed, STREAM_DROPOUT),
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn loss(&self, tape: &mut Tape<T>, out: Var, target: Tensor<T>) -> Result<Var> {
        Ok(match self.config.loss {
            ReconLoss::Dice => dice_loss_op(tape, out, target)?,
            ReconLoss::Mse => mse_op(tape, out, target)?,
        })
    }

    /// Runs one epoch and returns its train record (the validation record,
    /// if any, is appended to `history` after it).
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        self.epoch += 1;
        self.model.set_mode(Mode::Train);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let (mut loss_sum, mut sq_sum, mut px) = (0.0, 0.0, 0usize);
        let steps = order.len().div_ceil(self.config.batch_size);
        for (step, idx) in order.chunks(self.config.batch_size).enumerate() {
            let clean = gather(&self.train, idx)?;
            let noisy = add_gaussian_noise(&clean, self.config.noise_sigma, &mut self.noise_rng);
            let mut tape = Tape::new();
            let x = tape.constant(noisy);
            let vars: Vec<Var> = self.model.params.iter().map(|p| tape.param(p.value.clone())).collect();
            let fwd = self.model.forward_with(&mut tape, x, &vars, &mut self.dropout_rng)?;
            let out = tape.value(fwd.output);
            sq_sum += out
                .data()
                .iter()
                .zip(clean.data())
                .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
                .sum::<f64>();
            px += clean.len();
            let loss = self.loss(&mut tape, fwd.output, clean)?;
            let l = tape.value(loss).item().to_f64_lossy();
            if !l.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch: self.epoch, step });
            }
            loss_sum += l;
            tape.backward(loss)?;
            self.model.collect_grads(&tape, &vars);
            adam_step(&mut self.model.params, &mut self.adam, self.config.learning_rate)?;
        }
        let mut rec = EpochRecord::new(self.epoch, Split::Train);
        rec.loss = Some(loss_sum / steps as f64);
        rec.rmse = Some((sq_sum / px as f64).sqrt());
        self.history.push(rec.clone());
        if !self.val.is_empty() {
            let val = self.val.clone();
            let (loss, rmse) = self.evaluate(&val)?;
            let mut v = EpochRecord::new(self.epoch, Split::Validation);
            v.loss = Some(loss);
            v.rmse = Some(rmse);
            self.history.push(v);
        }
        Ok(rec)
    }

    /// Inference-mode (mean batch loss, RMSE) on clean inputs.
    pub fn evaluate(&mut self, slices: &[&Tensor<T>]) -> Result<(f64, f64)> {
        if slices.is_empty() {
            return Err(TrainError::EmptyDataset("nothing to evaluate"));
        }
        let (mut loss_sum, mut sq_sum, mut px, mut batches) = (0.0, 0.0, 0usize, 0usize);
        let idx: Vec<usize> = (0..slices.len()).collect();
        for chunk in idx.chunks(self.config.batch_size) {
            let clean = gather(slices, chunk)?;
            let out = self.model.predict(&clean)?;
            sq_sum += out
                .data()
                .iter()
                .zip(clean.data())
                .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
                .sum::<f64>();
            px += clean.len();
            let loss = match self.config.loss {
                ReconLoss::Dice => crate::losses::dice_loss(&out, &clean)?,
                ReconLoss::Mse => crate::losses::mse(&out, &clean)?,
            };
            loss_sum += loss;
            batches += 1;
        }
        Ok((loss_sum / batches as f64, (sq_sum / px as f64).sqrt()))
    }

    pub fn into_model(self) -> ModelGraph<T> {
        self.model
    }
}

/// Trains CAMP-I for `config.epochs` epochs. Returns the model and the
/// per-epoch log (train rows, and validation rows when `val` is non-empty).
pub fn train_autoencoder<T: Scalar>(
    train: &[Tensor<T>],
    val: &[Tensor<T>],
    config: &TrainConfig,
) -> Result<(ModelGraph<T>, Vec<EpochRecord>)> {
    let mut t = AutoencoderTrainer::new(train, val, config)?;
    for _ in 0..config.epochs {
        t.run_epoch()?;
    }
    let history = std::mem::take(&mut t.history);
    Ok((t.into_model(), history))
}
