//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many randomly chosen elements per input
    /// (`None` checks every element).
    pub max_per_input: Option<usize>,
    pub seed: u64,
    /// Lower bound on the relative-error denominator. Central differences
    /// carry absolute noise of roughly `1e-16 * |f| / h`, so gradients far
    /// below that cannot be resolved relatively.
    pub floor: f64,
    /// Piecewise-smooth objectives (leaky ReLU, max pooling): when `x +- h`
    /// changes a branch (see [`Tape::branch_signature`]), difference on a
    /// side that stays in the same piece, halving `h` up to
    /// [`MAX_HALVINGS`] times if both sides cross.
    pub kink_aware: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { h: 1e-5, max_per_input: None, seed: 0, floor: 1e-8, kink_aware: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// (input index, element index, analytic, numeric) of the worst element.
    pub worst: (usize, usize, f64, f64),
    pub checked: usize,
    /// Elements whose central step crossed a branch.
    pub kinks: usize,
}

pub const MAX_HALVINGS: u32 = 6;

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of the scalar produced by `f` against central
/// differences, w.r.t. every tensor in `inputs`.
///
/// `f` receives a fresh tape and one leaf per input, and must return a
/// one-element output. It is called `1 + 2 * checked` times, plus a few
/// more per kink when `kink_aware` is set.
pub fn gradcheck<F>(mut f: F, inputs: &[Tensor<f64>], opts: &GradcheckOptions) -> Result<GradcheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut eval = |ins: &[Tensor<f64>], want_grads: bool| -> Result<(f64, Vec<Tensor<f64>>, u64)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let value = tape.value(out).item();
        let branches = tape.branch_signature();
        if !value.is_finite() {
            return Err(TensorError::NonFinite("gradcheck objective".into()));
        }
        let mut grads = Vec::new();
        if want_grads {
            tape.backward(out)?;
            for (v, t) in vars.iter().zip(ins) {
                grads.push(tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())));
            }
        }
        Ok((value, grads, branches))
    };

    let (base, analytic, base_branches) = eval(inputs, true)?;
    for (i, g) in analytic.iter().enumerate() {
        if !g.all_finite() {
            return Err(TensorError::NonFinite(format!("analytic gradient of input {i}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradcheckReport { max_rel_error: 0.0, worst: (0, 0, 0.0, 0.0), checked: 0, kinks: 0 };
    for (i, input) in inputs.iter().enumerate() {
        let idx: Vec<usize> = match opts.max_per_input {
            Some(m) if m < input.len() => {
                let mut v = sample(&mut rng, input.len(), m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..input.len()).collect(),
        };
        for j in idx {
            let orig = input.data()[j];
            let mut at = |dx: f64| -> Result<(f64, u64)> {
                work[i].data_mut()[j] = orig + dx;
                let (v, _, sig) = eval(&work, false)?;
                work[i].data_mut()[j] = orig;
                Ok((v, sig))
            };
            let (plus, sig_plus) = at(opts.h)?;
            let (minus, sig_minus) = at(-opts.h)?;
            let mut numeric = (plus - minus) / (2.0 * opts.h);
            if opts.kink_aware && (sig_plus != base_branches || sig_minus != base_branches) {
                report.kinks += 1;
                numeric = one_sided(&mut at, base, base_branches, opts.h)?.unwrap_or(numeric);
            }
            let a = analytic[i].data()[j];
            let err = relative_error(a, numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, j, a, numeric);
            }
        }
    }
    Ok(report)
}

/// Second-order one-sided difference on the first side whose two steps stay
/// on the base branch, shrinking `h` until one does.
fn one_sided(at: &mut impl FnMut(f64) -> Result<(f64, u64)>, base: f64, branches: u64, h: f64) -> Result<Option<f64>> {
    let mut h = h;
    for _ in 0..=MAX_HALVINGS {
        for dir in [1.0, -1.0] {
            let (f1, s1) = at(dir * h)?;
            if s1 != branches {
                continue;
            }
            let (f2, s2) = at(2.0 * dir * h)?;
            if s2 == branches {
                return Ok(Some(dir * (-f2 + 4.0 * f1 - 3.0 * base) / (2.0 * h)));
            }
        }
        h /= 2.0;
    }
    Ok(None)
}
