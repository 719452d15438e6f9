use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{
    adam_step, gather, labeled, slice_size, stream, AdamState, EpochRecord, FoldPlan, Result, SliceRecord, Split,
    TrainConfig, TrainError, STREAM_DROPOUT, STREAM_SHUFFLE,
};
use crate::losses::{bce_mean, bce_op, sparse_regularizer_op};
use crate::models::{build_camp2, transfer_encoder_weights, ModelGraph, ModelOptions, TRANSFERRED_PARAMS};
use crate::tensor::{Mode, Tape, Tensor, Var};
use crate::Scalar;

/// Objective terms of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub bce: f64,
    pub r: f64,
    pub sum_kl: f64,
    pub beta2: f64,
}

/// Phase-II training loop: CAMP-II with the CAMP-I encoder transferred in,
/// minimizing cross-entropy plus the adaptive sparse regularizer on the
/// configured layer's activations.
pub struct ClassifierTrainer<'a, T: Scalar> {
    pub config: TrainConfig,
    pub model: ModelGraph<T>,
    pub history: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    adam: AdamState<T>,
    train: Vec<&'a SliceRecord<T>>,
    val: Vec<&'a SliceRecord<T>>,
    shuffle_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    epoch: usize,
}

fn images<'a, T: Scalar>(records: &[&'a SliceRecord<T>]) -> Vec<&'a Tensor<T>> {
    records.iter().map(|r| &r.image).collect()
}

fn labels<T: Scalar>(records: &[&SliceRecord<T>], idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&i| records[i].label.expect("checked labeled")).collect()
}

impl<'a, T: Scalar> ClassifierTrainer<'a, T> {
    pub fn new(
        train: &[&'a SliceRecord<T>],
        val: &[&'a SliceRecord<T>],
        encoder: &ModelGraph<T>,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        for set in [train, val] {
            if let Some(i) = set.iter().position(|r| r.label.is_none()) {
                return Err(TrainError::Unlabeled { patient: set[i].patient.clone(), index: i });
            }
        }
        let size = slice_size(&images(train), "no training slices")?;
        if !val.is_empty() && slice_size(&images(val), "validation")? != size {
            return Err(TrainError::SliceShape { expected: vec![size, size, 1], found: val[0].image.shape().to_vec() });
        }
        if encoder.input_size() != size {
            return Err(TrainError::SliceShape {
                expected: vec![encoder.input_size(), encoder.input_size(), 1],
                found: vec![size, size, 1],
            });
        }
        let options = ModelOptions {
            leaky_alpha: config.leaky_alpha,
            dropout_rate: config.dropout_rate,
            ..ModelOptions::with_size(size)
        };
        let mut model = build_camp2(config.seed, &options)?;
        match model.layers.iter().find(|l| l.name == config.sparsity_layer) {
            Some(l) if l.output_shape.len() == 1 => {}
            _ => return Err(TrainError::SparsityLayer(config.sparsity_layer.clone())),
        }
        transfer_encoder_weights(encoder, &mut model)?;
        let mut adam = AdamState::new(&model.params);
        if config.freeze_transferred {
            for (i, p) in model.params.iter().enumerate() {
                if TRANSFERRED_PARAMS.contains(&p.name.as_str()) {
                    adam.freeze(i);
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            model,
            history: Vec::new(),
            steps: Vec::new(),
            adam,
            train: train.to_vec(),
            val: val.to_vec(),
            shuffle_rng: stream(config.seed, STREAM_SHUFFLE),
            dropout_rng: stream(config.seed, STREAM_DROPOUT),
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Runs one epoch; returns the train record. Train accuracy counts the
    /// training-pass predictions (dropout active) at threshold 0.5.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        self.epoch += 1;
        self.model.set_mode(Mode::Train);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let imgs = images(&self.train);
        let (mut loss_sum, mut kl_sum, mut beta_sum, mut correct) = (0.0, 0.0, 0.0, 0usize);
        let mut n_steps = 0;
        for (step, idx) in order.chunks(self.config.batch_size).enumerate() {
            let x = gather(&imgs, idx)?;
            let y = labels(&self.train, idx);
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let vars: Vec<Var> = self.model.params.iter().map(|p| tape.param(p.value.clone())).collect();
            let fwd = self.model.forward_with(&mut tape, xv, &vars, &mut self.dropout_rng)?;
            let act = fwd
                .layer(&self.config.sparsity_layer)
                .ok_or_else(|| TrainError::SparsityLayer(self.config.sparsity_layer.clone()))?;
            let bce = bce_op(&mut tape, fwd.output, &y)?;
            let (r, reg) = sparse_regularizer_op(&mut tape, act, &self.config.sparsity)?;
            let total = tape.add(bce, r)?;
            let loss = tape.value(total).item().to_f64_lossy();
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch: self.epoch, step });
            }
            correct += tape
                .value(fwd.output)
                .data()
                .iter()
                .zip(&y)
                .filter(|(p, &l)| (p.to_f64_lossy() >= 0.5) == (l == 1))
                .count();
            self.steps.push(StepRecord {
                epoch: self.epoch,
                step,
                loss,
                bce: tape.value(bce).item().to_f64_lossy(),
                r: reg.r,
                sum_kl: reg.sum_kl,
                beta2: reg.beta2,
            });
            loss_sum += loss;
            kl_sum += reg.sum_kl;
            beta_sum += reg.beta2;
            n_steps += 1;
            tape.backward(total)?;
            self.model.collect_grads(&tape, &vars);
            adam_step(&mut self.model.params, &mut self.adam, self.config.learning_rate)?;
        }
        let n = n_steps as f64;
        let mut rec = EpochRecord::new(self.epoch, Split::Train);
        rec.loss = Some(loss_sum / n);
        rec.accuracy = Some(correct as f64 / self.train.len() as f64);
        rec.sum_kl = Some(kl_sum / n);
        rec.beta2 = Some(beta_sum / n);
        self.history.push(rec.clone());
        if !self.val.is_empty() {
            let val = self.val.clone();
            let scores = self.scores(&images(&val))?;
            let y: Vec<u8> = val.iter().map(|r| r.label.expect("checked")).collect();
            let mut v = EpochRecord::new(self.epoch, Split::Validation);
            v.loss = Some(bce_mean(&scores, &y)?);
            v.accuracy = Some(accuracy_at_half(&scores, &y));
            self.history.push(v);
        }
        Ok(rec)
    }

    /// Inference-mode probabilities, one per slice.
    pub fn scores(&mut self, images: &[&Tensor<T>]) -> Result<Vec<f64>> {
        score_slices(&mut self.model, images, self.config.batch_size)
    }

    pub fn into_model(self) -> ModelGraph<T> {
        self.model
    }
}

fn accuracy_at_half(scores: &[f64], labels: &[u8]) -> f64 {
    let ok = scores.iter().zip(labels).filter(|(s, &l)| (**s >= 0.5) == (l == 1)).count();
    ok as f64 / scores.len() as f64
}

/// Inference-mode CAMP-II probabilities for `[s, s, 1]` slices.
pub fn score_slices<T: Scalar>(
    model: &mut ModelGraph<T>,
    images: &[&Tensor<T>],
    batch_size: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(images.len());
    let idx: Vec<usize> = (0..images.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let p = model.predict(&gather(images, chunk)?)?;
        out.extend(p.data().iter().map(|v| v.to_f64_lossy()));
    }
    Ok(out)
}

/// Trains CAMP-II for `config.epochs` epochs starting from `encoder`'s
/// encoder weights. Returns the model, the per-epoch log and every step's
/// objective terms.
pub fn train_classifier<T: Scalar>(
    train: &[SliceRecord<T>],
    val: &[SliceRecord<T>],
    encoder: &ModelGraph<T>,
    config: &TrainConfig,
) -> Result<(ModelGraph<T>, Vec<EpochRecord>, Vec<StepRecord>)> {
    labeled(train)?;
    labeled(val)?;
    let tr: Vec<&SliceRecord<T>> = train.iter().collect();
    let va: Vec<&SliceRecord<T>> = val.iter().collect();
    let mut t = ClassifierTrainer::new(&tr, &va, encoder, config)?;
    for _ in 0..config.epochs {
        t.run_epoch()?;
    }
    let history = std::mem::take(&mut t.history);
    let steps = std::mem::take(&mut t.steps);
    Ok((t.into_model(), history, steps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    /// Inference-mode accuracy on the fold's own training slices.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// (patient, score, label) per validation slice.
    pub val_scores: Vec<(String, f64, u8)>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn mean_train_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.train_accuracy).sum::<f64>() / self.folds.len() as f64
    }

    /// Accuracy over all held-out slices of all folds.
    pub fn pooled_val_accuracy(&self) -> f64 {
        let all: Vec<&(String, f64, u8)> = self.folds.iter().flat_map(|f| &f.val_scores).collect();
        all.iter().filter(|(_, s, l)| (*s >= 0.5) == (*l == 1)).count() as f64 / all.len() as f64
    }
}

/// Trains one classifier per fold of `plan` (fold `i` uses seed
/// `config.seed + i`) and scores its held-out patients.
pub fn cross_validate<T: Scalar>(
    records: &[SliceRecord<T>],
    plan: &FoldPlan,
    encoder: &ModelGraph<T>,
    config: &TrainConfig,
) -> Result<CvReport> {
    labeled(records)?;
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (i, fold) in plan.folds.iter().enumerate() {
        let val_ids: BTreeSet<&str> = fold.validation.iter().map(String::as_str).collect();
        let train_ids: BTreeSet<&str> = fold.train.iter().map(String::as_str).collect();
        assert!(val_ids.is_disjoint(&train_ids), "fold {i} leaks patients");
        let train: Vec<&SliceRecord<T>> = records.iter().filter(|r| train_ids.contains(r.patient.as_str())).collect();
        let val: Vec<&SliceRecord<T>> = records.iter().filter(|r| val_ids.contains(r.patient.as_str())).collect();
        let cfg = TrainConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
        let mut t = ClassifierTrainer::new(&train, &val, encoder, &cfg)?;
        for _ in 0..cfg.epochs {
            t.run_epoch()?;
        }
        let train_scores = t.scores(&images(&train))?;
        let train_labels: Vec<u8> = train.iter().map(|r| r.label.expect("checked")).collect();
        let val_scores = if val.is_empty() { Vec::new() } else { t.scores(&images(&val))? };
        let val_labels: Vec<u8> = val.iter().map(|r| r.label.expect("checked")).collect();
        folds.push(FoldResult {
            fold: i,
            train_accuracy: accuracy_at_half(&train_scores, &train_labels),
            val_accuracy: if val.is_empty() { f64::NAN } else { accuracy_at_half(&val_scores, &val_labels) },
            val_scores: val
                .iter()
                .zip(val_scores)
                .map(|(r, s)| (r.patient.clone(), s, r.label.expect("checked")))
                .collect(),
            history: std::mem::take(&mut t.history),
        });
    }
    Ok(CvReport { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Modality;
    use crate::models::build_camp1;
    use rand::{Rng, SeedableRng};

    /// Label 1: checkerboard texture; label 0: flat patch.
    fn dataset(n: usize, s: usize, seed: u64) -> Vec<SliceRecord<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let ox = rng.random_range(0..s / 2);
                let image = Tensor::from_fn(&[s, s, 1], |k| {
                    let (y, x) = (k / s, k % s);
                    let inside = (s / 4..s / 4 + s / 2).contains(&y) && (ox..ox + s / 2).contains(&x);
                    match (inside, label) {
                        (false, _) => 0.1,
                        (true, 0) => 0.6,
                        (true, _) => 0.2 + 0.8 * ((x + y) % 2) as f32,
                    }
                });
                SliceRecord { patient: format!("P{i:03}"), modality: Modality::Flair, label: Some(label), image }
            })
            .collect()
    }

    fn encoder() -> ModelGraph<f32> {
        build_camp1(5, &ModelOptions::with_size(32)).unwrap()
    }

    #[test]
    fn learns_texture_and_logs_bounded_beta() {
        let data = dataset(16, 32, 1);
        let cfg = TrainConfig { epochs: 40, batch_size: 4, dropout_rate: 0.0, ..TrainConfig::default() };
        let (mut model, hist, steps) = train_classifier(&data, &data[..4], &encoder(), &cfg).unwrap();
        assert_eq!(steps.len(), 40 * 4);
        assert!(steps.iter().all(|s| (1.0..=5.0).contains(&s.beta2) && s.r >= 0.0 && s.sum_kl >= 0.0));
        assert_eq!(hist.iter().filter(|r| r.split == Split::Validation).count(), 40);
        let refs: Vec<&Tensor<f32>> = data.iter().map(|r| &r.image).collect();
        let scores = score_slices(&mut model, &refs, 8).unwrap();
        let y: Vec<u8> = data.iter().map(|r| r.label.unwrap()).collect();
        assert!(accuracy_at_half(&scores, &y) >= 0.9, "{scores:?}");
    }

    #[test]
    fn freeze_keeps_transferred_kernels() {
        let data = dataset(8, 32, 2);
        let enc = encoder();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, freeze_transferred: true, ..TrainConfig::default() };
        let (m, _, _) = train_classifier(&data, &[], &enc, &cfg).unwrap();
        for name in TRANSFERRED_PARAMS {
            assert_eq!(m.param(name).unwrap().value, enc.param(name).unwrap().value);
        }
        assert_ne!(
            m.param("dense1.kernel").unwrap().value,
            build_camp2::<f32>(cfg.seed, &m.options).unwrap().param("dense1.kernel").unwrap().value
        );
    }

    #[test]
    fn rejects_unlabeled_and_mismatched_encoder() {
        let mut data = dataset(4, 32, 3);
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let wrong: ModelGraph<f32> = build_camp1(0, &ModelOptions::with_size(64)).unwrap();
        assert!(matches!(train_classifier(&data, &[], &wrong, &cfg), Err(TrainError::SliceShape { .. })));
        let camp2: ModelGraph<f32> = build_camp2(0, &ModelOptions::with_size(32)).unwrap();
        assert!(train_classifier(&data, &[], &camp2, &cfg).is_err());
        let bad_layer = TrainConfig { sparsity_layer: "conv4".into(), ..cfg.clone() };
        assert!(matches!(train_classifier(&data, &[], &encoder(), &bad_layer), Err(TrainError::SparsityLayer(_))));
        data[2].label = None;
        assert!(matches!(train_classifier(&data, &[], &encoder(), &cfg), Err(TrainError::Unlabeled { index: 2, .. })));
    }

    #[test]
    fn cross_validation_holds_out_patients() {
        let data = dataset(6, 32, 4);
        let ids: Vec<String> = data.iter().map(|r| r.patient.clone()).collect();
        let plan = FoldPlan::from_patients(&ids, 3, 0).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 2, ..TrainConfig::default() };
        let rep = cross_validate(&data, &plan, &encoder(), &cfg).unwrap();
        assert_eq!(rep.folds.len(), 3);
        for (f, fold) in rep.folds.iter().zip(&plan.folds) {
            let held: Vec<&String> = f.val_scores.iter().map(|(p, _, _)| p).collect();
            assert_eq!(held, fold.validation.iter().collect::<Vec<_>>());
        }
        assert!((0.0..=1.0).contains(&rep.pooled_val_accuracy()));
    }
}
