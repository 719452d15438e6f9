//! Objective terms: Dice, RMSE, MSE, binary cross-entropy, Bernoulli KL and
//! the adaptive sparse regularizer.
//!
//! Plain functions evaluate a term on tensors; the `*_op` functions record
//! the same term on a [`Tape`] so it can be differentiated.
//!
//! The regularizer penalises the per-unit mean activation `p_hat_i` of a
//! layer for drifting from a target rate `p`:
//!
//! ```text
//! sum_kl = sum_i KL(p || p_hat_i)
//! beta2  = clamp(beta_min + (beta_max - beta_min) * sum_kl, beta_min, beta_max)
//! R      = beta2 * sum_kl
//! ```
//!
//! `beta2` is differentiated through, not treated as a constant.

use thiserror::Error;

use crate::tensor::{CustomOp, Tape, Tensor, TensorError, Var};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("{op}: shape mismatch {a:?} vs {b:?}")]
    Shape { op: &'static str, a: Vec<usize>, b: Vec<usize> },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("invalid sparsity config: {0}")]
    Config(String),
    #[error("{op}: {detail}")]
    Argument { op: &'static str, detail: String },
}

impl From<LossError> for TensorError {
    fn from(e: LossError) -> Self {
        TensorError::Argument { op: "loss", detail: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Added to the Dice denominator so that two all-zero images are defined.
pub const DICE_SMOOTHING: f64 = 1e-7;
/// Probability clamp for cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LossError::Shape { op, a: a.shape().to_vec(), b: b.shape().to_vec() });
    }
    if a.is_empty() {
        return Err(LossError::Empty(op));
    }
    Ok(())
}

struct DiceSums {
    gt: f64,
    gg: f64,
    tt: f64,
}

fn dice_sums<T: Scalar>(g: &Tensor<T>, t: &Tensor<T>) -> DiceSums {
    let mut s = DiceSums { gt: 0.0, gg: 0.0, tt: 0.0 };
    for (&a, &b) in g.data().iter().zip(t.data()) {
        let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
        s.gt += a * b;
        s.gg += a * a;
        s.tt += b * b;
    }
    s
}

/// `2 sum(G T) / (sum(G^2) + sum(T^2) + smoothing)`
pub fn dice_coefficient<T: Scalar>(generated: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    same_shape("dice", generated, target)?;
    let s = dice_sums(generated, target);
    Ok(2.0 * s.gt / (s.gg + s.tt + DICE_SMOOTHING))
}

pub fn dice_loss<T: Scalar>(generated: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    Ok(1.0 - dice_coefficient(generated, target)?)
}

struct DiceOp<T> {
    target: Tensor<T>,
}

impl<T: Scalar> CustomOp<T> for DiceOp<T> {
    fn name(&self) -> &'static str {
        "dice_loss"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let g = inputs[0];
        let s = dice_sums(g, &self.target);
        let d = s.gg + s.tt + DICE_SMOOTHING;
        let up = grad.item().to_f64_lossy();
        let data = g
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(&gi, &ti)| {
                let (gi, ti) = (gi.to_f64_lossy(), ti.to_f64_lossy());
                T::from_f64_lossy(up * (-2.0 * ti / d + 4.0 * s.gt * gi / (d * d)))
            })
            .collect();
        vec![Some(Tensor::new(g.shape(), data).expect("same shape"))]
    }
}

/// Records `1 - dice_coefficient(generated, target)`; differentiable in
/// `generated`.
pub fn dice_loss_op<T: Scalar>(tape: &mut Tape<T>, generated: Var, target: Tensor<T>) -> Result<Var> {
    let loss = dice_loss(tape.value(generated), &target)?;
    Ok(tape.custom(&[generated], Tensor::scalar(T::from_f64_lossy(loss)), Box::new(DiceOp { target })))
}

/// Root of the mean squared pixel difference.
pub fn rmse<T: Scalar>(output: &Tensor<T>, truth: &Tensor<T>) -> Result<f64> {
    Ok(mse(output, truth)?.sqrt())
}

pub fn mse<T: Scalar>(output: &Tensor<T>, truth: &Tensor<T>) -> Result<f64> {
    same_shape("mse", output, truth)?;
    let sum: f64 =
        output.data().iter().zip(truth.data()).map(|(&a, &b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2)).sum();
    Ok(sum / output.len() as f64)
}

struct MseOp<T> {
    target: Tensor<T>,
}

impl<T: Scalar> CustomOp<T> for MseOp<T> {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let o = inputs[0];
        let k = 2.0 * grad.item().to_f64_lossy() / o.len() as f64;
        let data = o
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(&a, &b)| T::from_f64_lossy(k * (a.to_f64_lossy() - b.to_f64_lossy())))
            .collect();
        vec![Some(Tensor::new(o.shape(), data).expect("same shape"))]
    }
}

pub fn mse_op<T: Scalar>(tape: &mut Tape<T>, output: Var, target: Tensor<T>) -> Result<Var> {
    let loss = mse(tape.value(output), &target)?;
    Ok(tape.custom(&[output], Tensor::scalar(T::from_f64_lossy(loss)), Box::new(MseOp { target })))
}

/// Cross-entropy of one prediction against a 0/1 label, natural log.
pub fn bce(prediction: f64, label: u8) -> f64 {
    let p = prediction.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn bce_mean(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(LossError::Shape { op: "bce", a: vec![predictions.len()], b: vec![labels.len()] });
    }
    if predictions.is_empty() {
        return Err(LossError::Empty("bce"));
    }
    Ok(predictions.iter().zip(labels).map(|(&p, &y)| bce(p, y)).sum::<f64>() / predictions.len() as f64)
}

struct BceOp {
    labels: Vec<u8>,
}

impl<T: Scalar> CustomOp<T> for BceOp {
    fn name(&self) -> &'static str {
        "bce"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let p = inputs[0];
        let k = grad.item().to_f64_lossy() / p.len() as f64;
        let data = p
            .data()
            .iter()
            .zip(&self.labels)
            .map(|(&v, &y)| {
                let v = v.to_f64_lossy();
                if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&v) {
                    return T::zero();
                }
                let d = if y == 1 { -1.0 / v } else { 1.0 / (1.0 - v) };
                T::from_f64_lossy(k * d)
            })
            .collect();
        vec![Some(Tensor::new(p.shape(), data).expect("same shape"))]
    }
}

/// Mean cross-entropy of `predictions` (any shape with one element per
/// label) against `labels`.
pub fn bce_op<T: Scalar>(tape: &mut Tape<T>, predictions: Var, labels: &[u8]) -> Result<Var> {
    let preds: Vec<f64> = tape.value(predictions).data().iter().map(|v| v.to_f64_lossy()).collect();
    if labels.iter().any(|&y| y > 1) {
        return Err(LossError::Argument { op: "bce", detail: "labels must be 0 or 1".into() });
    }
    let loss = bce_mean(&preds, labels)?;
    Ok(tape.custom(
        &[predictions],
        Tensor::scalar(T::from_f64_lossy(loss)),
        Box::new(BceOp { labels: labels.to_vec() }),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityConfig {
    /// Target mean activation per unit.
    pub p: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Rates are clamped to `[epsilon, 1 - epsilon]`.
    pub epsilon: f64,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self { p: 0.2, beta_min: 1.0, beta_max: 5.0, epsilon: 1e-7 }
    }
}

impl SparsityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(LossError::Config(format!("p = {} must lie in (0, 1)", self.p)));
        }
        if !self.beta_min.is_finite() || !self.beta_max.is_finite() || self.beta_min > self.beta_max {
            return Err(LossError::Config(format!(
                "need beta_min <= beta_max, got {} and {}",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(LossError::Config(format!("epsilon = {} must lie in (0, 0.5)", self.epsilon)));
        }
        Ok(())
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.epsilon, 1.0 - self.epsilon)
    }
}

/// `p ln(p / q) + (1 - p) ln((1 - p) / (1 - q))` in nats, with both rates
/// clamped to `[eps, 1 - eps]`.
///
/// Evaluated as `p f(d/p) + (1-p) f(-d/(1-p))` with `f(x) = x - ln(1+x)`
/// and `d = q - p`; both terms are non-negative, so rounding cannot push
/// the result below zero when `q` is close to `p`.
pub fn kl_bernoulli(p: f64, p_hat: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    let q = p_hat.clamp(eps, 1.0 - eps);
    let d = q - p;
    let f = |x: f64| (x - x.ln_1p()).max(0.0);
    p * f(d / p) + (1.0 - p) * f(-d / (1.0 - p))
}

fn kl_derivative(p: f64, q: f64) -> f64 {
    -p / q + (1.0 - p) / (1.0 - q)
}

/// Diagnostics and value of one regularizer evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerOutput {
    /// Per-unit mean activation over the batch.
    pub p_hat: Vec<f64>,
    pub sum_kl: f64,
    pub beta2: f64,
    pub r: f64,
    /// Standard deviation over the whole activation matrix. Reported only;
    /// it does not enter `r`.
    pub activation_std: f64,
}

/// Evaluates the regularizer on a `[batch, units]` activation matrix.
pub fn adaptive_sparse_regularizer<T: Scalar>(
    activations: &Tensor<T>,
    config: &SparsityConfig,
) -> Result<RegularizerOutput> {
    config.validate()?;
    let shape = activations.shape();
    if shape.len() != 2 {
        return Err(LossError::Argument {
            op: "sparse_regularizer",
            detail: format!("expected [batch, units], got {shape:?}"),
        });
    }
    let (batch, units) = (shape[0], shape[1]);
    if batch == 0 || units == 0 {
        return Err(LossError::Empty("sparse_regularizer"));
    }
    let mut p_hat = vec![0.0; units];
    for row in activations.data().chunks_exact(units) {
        for (m, &a) in p_hat.iter_mut().zip(row) {
            *m += a.to_f64_lossy();
        }
    }
    p_hat.iter_mut().for_each(|m| *m /= batch as f64);

    let sum_kl: f64 = p_hat.iter().map(|&q| kl_bernoulli(config.p, q, config.epsilon)).sum();
    let beta2 =
        (config.beta_min + (config.beta_max - config.beta_min) * sum_kl).clamp(config.beta_min, config.beta_max);

    let n = activations.len() as f64;
    let mean = activations.data().iter().map(|a| a.to_f64_lossy()).sum::<f64>() / n;
    let var = activations.data().iter().map(|a| (a.to_f64_lossy() - mean).powi(2)).sum::<f64>() / n;

    Ok(RegularizerOutput { p_hat, sum_kl, beta2, r: beta2 * sum_kl, activation_std: var.sqrt() })
}

impl RegularizerOutput {
    /// `dR / d sum_kl`, including the dependence of `beta2` on `sum_kl`
    /// while the clamp is inactive.
    pub fn d_r_d_sum_kl(&self, config: &SparsityConfig) -> f64 {
        let raw = config.beta_min + (config.beta_max - config.beta_min) * self.sum_kl;
        if raw > config.beta_min && raw < config.beta_max {
            self.beta2 + (config.beta_max - config.beta_min) * self.sum_kl
        } else {
            self.beta2
        }
    }
}

struct SparseRegOp {
    config: SparsityConfig,
    out: RegularizerOutput,
}

impl<T: Scalar> CustomOp<T> for SparseRegOp {
    fn name(&self) -> &'static str {
        "sparse_regularizer"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let a = inputs[0];
        let (batch, units) = (a.shape()[0], a.shape()[1]);
        let cfg = &self.config;
        let outer = grad.item().to_f64_lossy() * self.out.d_r_d_sum_kl(cfg) / batch as f64;
        let per_unit: Vec<T> = self
            .out
            .p_hat
            .iter()
            .map(|&q| {
                // clamp has zero derivative outside its range
                if q <= cfg.epsilon || q >= 1.0 - cfg.epsilon {
                    T::zero()
                } else {
                    T::from_f64_lossy(outer * kl_derivative(cfg.clamp(cfg.p), q))
                }
            })
            .collect();
        let data = (0..batch).flat_map(|_| per_unit.iter().copied()).collect();
        vec![Some(Tensor::new(&[batch, units], data).expect("same shape"))]
    }
}

/// Records the regularizer value `R` of `activations` (`[batch, units]`).
pub fn sparse_regularizer_op<T: Scalar>(
    tape: &mut Tape<T>,
    activations: Var,
    config: &SparsityConfig,
) -> Result<(Var, RegularizerOutput)> {
    let out = adaptive_sparse_regularizer(tape.value(activations), config)?;
    let value = Tensor::scalar(T::from_f64_lossy(out.r));
    let var = tape.custom(&[activations], value, Box::new(SparseRegOp { config: config.clone(), out: out.clone() }));
    Ok((var, out))
}

/// Total objective `L = L_recon + R`.
pub fn combined_loss(l_recon: f64, r: f64) -> f64 {
    l_recon + r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gradcheck, GradcheckOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(data: &[f64]) -> Tensor<f64> {
        Tensor::new(&[data.len()], data.to_vec()).unwrap()
    }

    fn kl_direct(p: f64, q: f64) -> f64 {
        p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
    }

    #[test]
    fn dice_reference_values() {
        let g = t(&[0.3, 0.9, 0.1]);
        assert!((dice_coefficient(&g, &g).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(dice_coefficient(&t(&[1.0, 0.0]), &t(&[0.0, 1.0])).unwrap(), 0.0);
        let c = dice_coefficient(&t(&[1.0, 1.0, 0.0, 0.0]), &t(&[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert!((c - 2.0 / (4.0 + DICE_SMOOTHING)).abs() < 1e-15);
        assert!((c - 0.5).abs() < 1e-7);
        assert!(dice_loss(&g, &g).unwrap().abs() < 1e-6);
        assert_eq!(dice_loss(&t(&[1.0, 0.0]), &t(&[0.0, 1.0])).unwrap(), 1.0);
        assert!(matches!(dice_coefficient(&t(&[1.0]), &t(&[1.0, 2.0])), Err(LossError::Shape { .. })));
    }

    #[test]
    fn dice_symmetric_and_scale_behaviour() {
        let a = t(&[1.0, 0.0, 1.0, 1.0]);
        let b = t(&[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(dice_coefficient(&a, &b).unwrap(), dice_coefficient(&b, &a).unwrap());
        let a2 = a.map(|v| v * 0.5);
        let b2 = b.map(|v| v * 0.5);
        let d = (dice_coefficient(&a, &b).unwrap() - dice_coefficient(&a2, &b2).unwrap()).abs();
        assert!(d <= 1e-6, "{d}");
    }

    #[test]
    fn rmse_reference_values() {
        let o = t(&[0.0, 10.0]);
        assert_eq!(rmse(&o, &o).unwrap(), 0.0);
        assert!((rmse(&o, &o.map(|v| v + 3.0)).unwrap() - 3.0).abs() < 1e-12);
        let r = rmse(&o, &t(&[4.0, 2.0])).unwrap();
        assert!((r - 40f64.sqrt()).abs() < 1e-12);
        assert!((r - 6.3246).abs() < 1e-4);
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce(0.5, 1) - 2f64.ln()).abs() < 1e-15);
        assert!((bce(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce(1.0, 1) < 1e-6);
        assert!(bce(0.0, 0) < 1e-6);
        assert!(bce(0.0, 1).is_finite());
        assert!(bce_mean(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn kl_reference_values() {
        assert_eq!(kl_bernoulli(0.2, 0.2, 1e-7), 0.0);
        let want = 0.2 * 0.4f64.ln() + 0.8 * 1.6f64.ln();
        assert!((kl_bernoulli(0.2, 0.5, 1e-7) - want).abs() < 1e-15);
        assert!((want - 0.1927).abs() < 1e-4);
        let edge = kl_bernoulli(0.2, 0.0, 1e-7);
        assert!(edge.is_finite() && edge > 1.0);
    }

    #[test]
    fn kl_grid_nonnegative_with_equality_only_on_diagonal() {
        for i in 1..100 {
            for j in 1..100 {
                let (p, q) = (i as f64 / 100.0, j as f64 / 100.0);
                let k = kl_bernoulli(p, q, 1e-7);
                assert!(k >= 0.0);
                assert_eq!(k == 0.0, i == j, "p={p} q={q} kl={k}");
                assert!((k - kl_direct(p, q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regularizer_reference_cases() {
        let cfg = SparsityConfig::default();
        let at_target = Tensor::<f64>::full(&[4, 8], 0.2);
        let out = adaptive_sparse_regularizer(&at_target, &cfg).unwrap();
        assert_eq!((out.sum_kl, out.beta2, out.r), (0.0, 1.0, 0.0));

        let half = Tensor::<f64>::full(&[3, 1], 0.5);
        let out = adaptive_sparse_regularizer(&half, &cfg).unwrap();
        let kl = kl_direct(0.2, 0.5);
        assert!((out.sum_kl - kl).abs() < 1e-15);
        assert!((out.beta2 - (1.0 + 4.0 * kl)).abs() < 1e-12);
        assert!((out.r - (1.0 + 4.0 * kl) * kl).abs() < 1e-12);
        assert!((out.beta2 - 1.7710).abs() < 1e-4);
        assert!((out.r - 0.3413).abs() < 1e-4);

        let saturated = Tensor::<f64>::full(&[2, 64], 0.999);
        let out = adaptive_sparse_regularizer(&saturated, &cfg).unwrap();
        assert!(out.sum_kl > 1.0);
        assert_eq!(out.beta2, 5.0);
        assert_eq!(out.r, 5.0 * out.sum_kl);

        assert!(adaptive_sparse_regularizer(&Tensor::<f64>::zeros(&[0, 4]), &cfg).is_err());
        let bad = SparsityConfig { p: 1.0, ..cfg };
        assert!(adaptive_sparse_regularizer(&half, &bad).is_err());
    }

    #[test]
    fn combined_loss_adds() {
        assert_eq!(combined_loss(0.7, 0.0), 0.7);
        assert!((combined_loss(0.5, 0.3413) - 0.8413).abs() < 1e-12);
        assert!(combined_loss(0.5, 0.4) > combined_loss(0.5, 0.3));
        assert!(combined_loss(0.6, 0.3) > combined_loss(0.5, 0.3));
    }

    #[test]
    fn r_continuous_across_clamp_boundary() {
        let cfg = SparsityConfig::default();
        // beta2 reaches beta_max when sum_kl = 1
        let r = |s: f64| (cfg.beta_min + (cfg.beta_max - cfg.beta_min) * s).clamp(cfg.beta_min, cfg.beta_max) * s;
        assert!((r(1.0 - 1e-9) - r(1.0 + 1e-9)).abs() < 1e-7);
        let mut prev = -1.0;
        for i in 0..=100 {
            let v = r(i as f64 / 100.0);
            assert!(v > prev);
            prev = v;
        }
    }

    fn opts() -> GradcheckOptions {
        GradcheckOptions::default()
    }

    #[test]
    fn dice_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Tensor::<f64>::uniform(&[2, 3, 3, 1], 0.05, 0.95, &mut rng);
        let target = Tensor::<f64>::uniform(&[2, 3, 3, 1], 0.0, 1.0, &mut rng);
        let r = gradcheck(|tp, v| Ok(dice_loss_op(tp, v[0], target.clone())?), &[g], &opts()).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn mse_and_bce_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let o = Tensor::<f64>::uniform(&[5], 0.0, 1.0, &mut rng);
        let target = Tensor::<f64>::uniform(&[5], 0.0, 1.0, &mut rng);
        let r = gradcheck(|tp, v| Ok(mse_op(tp, v[0], target.clone())?), std::slice::from_ref(&o), &opts()).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        let p = Tensor::<f64>::uniform(&[5, 1], 0.05, 0.95, &mut rng);
        let labels = [1, 0, 0, 1, 1];
        let r = gradcheck(|tp, v| Ok(bce_op(tp, v[0], &labels)?), &[p], &opts()).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn regularizer_gradient_in_both_regimes() {
        let cfg = SparsityConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // few units: sum_kl < 1, beta2 unclamped
        let a = Tensor::<f64>::uniform(&[4, 2], 0.1, 0.5, &mut rng);
        assert!(adaptive_sparse_regularizer(&a, &cfg).unwrap().sum_kl < 1.0);
        let r = gradcheck(|tp, v| Ok(sparse_regularizer_op(tp, v[0], &cfg)?.0), &[a], &opts()).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        // many units far from target: clamped at beta_max
        let a = Tensor::<f64>::uniform(&[4, 16], 0.6, 0.95, &mut rng);
        assert_eq!(adaptive_sparse_regularizer(&a, &cfg).unwrap().beta2, 5.0);
        let r = gradcheck(|tp, v| Ok(sparse_regularizer_op(tp, v[0], &cfg)?.0), &[a], &opts()).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    proptest! {
        #[test]
        fn regularizer_invariants(batch in 1usize..6, units in 1usize..12, seed in any::<u64>()) {
            let cfg = SparsityConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::<f64>::uniform(&[batch, units], 0.0, 1.0, &mut rng);
            let out = adaptive_sparse_regularizer(&a, &cfg).unwrap();
            prop_assert!(out.r >= 0.0);
            prop_assert!(out.beta2 >= cfg.beta_min && out.beta2 <= cfg.beta_max);
            prop_assert!((out.r - out.beta2 * out.sum_kl).abs() <= 1e-12 * out.r.max(1.0));
        }
    }
}
