//! Finite-difference checks of every differentiable op, each loss, and both
//! networks at 32x32, all in `f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::losses::{bce_op, dice_loss_op, mse_op, sparse_regularizer_op, SparsityConfig};
use crate::models::{build_camp1, build_camp2, ModelOptions};
use crate::tensor::{gradcheck, GradcheckOptions, Mode, Padding, Tape, Tensor, TensorError, Var};

/// Pass bound on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Side length of the networks under test.
pub const MODEL_SIZE: usize = 32;

/// Elements sampled per parameter tensor in the network checks.
pub const MODEL_SAMPLES: usize = 20;

// Summed losses over thousands of pixels leave ~1e-10 (CAMP-I) and ~1e-9
// (CAMP-II, whose regularizer term is ~50x the BCE) of absolute noise in
// central differences, so gradients below these floors are compared on an
// absolute scale. Both are about 1e-3 of the largest gradients.
const CAMP1_FLOOR: f64 = 1e-5;
const CAMP2_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Elements whose `x +- h` crossed a leaky ReLU or max-pool branch and
    /// were differenced one-sided.
    pub kinks: usize,
    /// Set when the objective itself failed to evaluate.
    pub error: Option<String>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.max_rel_error < TOLERANCE
    }
}

pub const SUITE_HEADER: &str = "case,max_rel_error,checked,kinks,status";

pub fn suite_csv(results: &[CaseResult]) -> String {
    let mut s = format!("{SUITE_HEADER}\n");
    for r in results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        s.push_str(&format!("{},{:e},{},{},{status}\n", r.name, r.max_rel_error, r.checked, r.kinks));
    }
    s
}

fn run<F>(name: &str, f: F, inputs: &[Tensor<f64>], opts: GradcheckOptions) -> CaseResult
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> crate::tensor::Result<Var>,
{
    match gradcheck(f, inputs, &opts) {
        Ok(r) => CaseResult {
            name: name.into(),
            max_rel_error: r.max_rel_error,
            checked: r.checked,
            kinks: r.kinks,
            error: None,
        },
        Err(e) => broken(name, e),
    }
}

fn broken(name: &str, e: impl std::fmt::Display) -> CaseResult {
    CaseResult { name: name.into(), max_rel_error: f64::NAN, checked: 0, kinks: 0, error: Some(e.to_string()) }
}

fn all() -> GradcheckOptions {
    GradcheckOptions::default()
}

fn wrap(e: impl std::fmt::Display) -> TensorError {
    TensorError::Argument { op: "objective", detail: e.to_string() }
}

/// Output shape of `f` on constant inputs.
fn out_shape(
    inputs: &[&Tensor<f64>],
    f: impl FnOnce(&mut Tape<f64>, &[Var]) -> crate::tensor::Result<Var>,
) -> Vec<usize> {
    let mut t = Tape::new();
    let v: Vec<Var> = inputs.iter().map(|x| t.constant((*x).clone())).collect();
    let y = f(&mut t, &v).expect("suite shapes are valid");
    t.shape(y).to_vec()
}

/// Runs every case with inputs drawn from `seed`.
pub fn run_suite(seed: u64) -> Vec<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |shape: &[usize], lo: f64, hi: f64| Tensor::<f64>::uniform(shape, lo, hi, &mut rng);
    let mut results = Vec::new();

    for (stride, padding, name) in [
        (1, Padding::Same, "conv2d stride 1 same"),
        (2, Padding::Same, "conv2d stride 2 same"),
        (1, Padding::Valid, "conv2d valid"),
    ] {
        let (x, k, b) = (u(&[2, 7, 6, 3], -1.0, 1.0), u(&[3, 3, 3, 4], -1.0, 1.0), u(&[4], -1.0, 1.0));
        let probe = u(&out_shape(&[&x, &k, &b], |t, v| t.conv2d(v[0], v[1], v[2], stride, padding)), -1.0, 1.0);
        results.push(run(
            name,
            |t, v| {
                let y = t.conv2d(v[0], v[1], v[2], stride, padding)?;
                t.weighted_sum(y, probe.clone())
            },
            &[x, k, b],
            all(),
        ));
    }
    // nine channels take the tap-wise kernel
    let (x, k, b) = (u(&[1, 5, 5, 9], -1.0, 1.0), u(&[3, 3, 9, 2], -1.0, 1.0), u(&[2], -1.0, 1.0));
    let probe = u(&[1, 5, 5, 2], -1.0, 1.0);
    results.push(run(
        "conv2d wide",
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 1, Padding::Same)?;
            t.weighted_sum(y, probe.clone())
        },
        &[x, k, b],
        GradcheckOptions { max_per_input: Some(60), ..all() },
    ));

    let (x, k, b) = (u(&[2, 3, 4, 3], -1.0, 1.0), u(&[3, 3, 2, 3], -1.0, 1.0), u(&[2], -1.0, 1.0));
    let probe = u(&[2, 6, 8, 2], -1.0, 1.0);
    results.push(run(
        "conv2d_transpose",
        |t, v| {
            let y = t.conv2d_transpose(v[0], v[1], v[2], 2)?;
            t.weighted_sum(y, probe.clone())
        },
        &[x, k, b],
        all(),
    ));

    let (x, probe) = (u(&[2, 4, 6, 3], -1.0, 1.0), u(&[2, 2, 3, 3], -1.0, 1.0));
    results.push(run(
        "maxpool2d",
        |t, v| {
            let y = t.maxpool2d(v[0], 2)?;
            t.weighted_sum(y, probe.clone())
        },
        &[x],
        all(),
    ));

    let (x, w, b, probe) = (u(&[3, 5], -1.0, 1.0), u(&[5, 4], -1.0, 1.0), u(&[4], -1.0, 1.0), u(&[3, 4], -1.0, 1.0));
    results.push(run(
        "dense",
        |t, v| {
            let y = t.dense(v[0], v[1], v[2])?;
            t.weighted_sum(y, probe.clone())
        },
        &[x, w, b],
        all(),
    ));

    let (x, g, b) = (u(&[2, 3, 3, 4], -2.0, 2.0), u(&[4], 0.5, 1.5), u(&[4], -1.0, 1.0));
    let probe = u(&[2, 3, 3, 4], -1.0, 1.0);
    results.push(run(
        "batchnorm train",
        |t, v| {
            let (y, _) = t.batchnorm2d_train(v[0], v[1], v[2], 1e-5)?;
            t.weighted_sum(y, probe.clone())
        },
        &[x.clone(), g.clone(), b.clone()],
        all(),
    ));
    let (mean, var) = ([0.1, -0.2, 0.3, 0.0], [0.5, 1.2, 0.8, 2.0]);
    results.push(run(
        "batchnorm infer",
        |t, v| {
            let y = t.batchnorm2d_infer(v[0], v[1], v[2], &mean, &var, 1e-5)?;
            t.weighted_sum(y, probe.clone())
        },
        &[x, g, b],
        all(),
    ));

    let (x, y, probe) = (u(&[4, 6], -2.0, 2.0), u(&[4, 6], -1.0, 1.0), u(&[4, 6], -1.0, 1.0));
    results.push(run(
        "leaky_relu",
        |t, v| {
            let a = t.leaky_relu(v[0], 0.01);
            t.weighted_sum(a, probe.clone())
        },
        std::slice::from_ref(&x),
        all(),
    ));
    results.push(run(
        "sigmoid",
        |t, v| {
            let a = t.sigmoid(v[0]);
            t.weighted_sum(a, probe.clone())
        },
        std::slice::from_ref(&x),
        all(),
    ));
    results.push(run(
        "dropout",
        |t, v| {
            // a fresh generator per evaluation keeps the mask fixed
            let a = t.dropout(v[0], 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed))?;
            t.weighted_sum(a, probe.clone())
        },
        std::slice::from_ref(&x),
        all(),
    ));
    results.push(run(
        "reshape/flatten",
        |t, v| {
            let a = t.reshape(v[0], &[4, 2, 3, 1])?;
            let f = t.flatten(a)?;
            t.weighted_sum(f, probe.clone())
        },
        std::slice::from_ref(&x),
        all(),
    ));
    results.push(run(
        "add/scale",
        |t, v| {
            let s = t.scale(v[1], -1.7);
            let a = t.add(v[0], s)?;
            t.weighted_sum(a, probe.clone())
        },
        &[x, y],
        all(),
    ));

    let (out, target) = (u(&[2, 4, 4, 1], 0.05, 0.95), u(&[2, 4, 4, 1], 0.0, 1.0));
    results.push(run(
        "dice loss",
        |t, v| dice_loss_op(t, v[0], target.clone()).map_err(wrap),
        std::slice::from_ref(&out),
        all(),
    ));
    results.push(run("mse loss", |t, v| mse_op(t, v[0], target.clone()).map_err(wrap), &[out], all()));
    let p = u(&[6, 1], 0.05, 0.95);
    let labels = [0, 1, 1, 0, 1, 0];
    results.push(run("bce loss", |t, v| bce_op(t, v[0], &labels).map_err(wrap), &[p], all()));
    let cfg = SparsityConfig::default();
    // means near p keep beta2 inside its clamp; far from p it saturates
    for (name, a) in
        [("regularizer beta2 free", u(&[8, 5], 0.1, 0.3)), ("regularizer beta2 clamped", u(&[8, 5], 0.6, 0.95))]
    {
        results.push(run(name, |t, v| sparse_regularizer_op(t, v[0], &cfg).map(|r| r.0).map_err(wrap), &[a], all()));
    }

    // train-mode batch norm; dropout off so the objective is deterministic
    let opts = ModelOptions { dropout_rate: 0.0, ..ModelOptions::with_size(MODEL_SIZE) };
    let sampled =
        |floor| GradcheckOptions { max_per_input: Some(MODEL_SAMPLES), floor, seed, kink_aware: true, ..all() };
    let s = MODEL_SIZE;

    let batch = u(&[2, s, s, 1], 0.0, 1.0);
    match build_camp1::<f64>(seed, &opts) {
        Ok(mut m) => {
            let mut inputs: Vec<Tensor<f64>> = m.params.iter().map(|p| p.value.clone()).collect();
            inputs.push(batch.clone());
            results.push(run(
                "CAMP-I dice",
                |t, v| {
                    let (params, x) = v.split_at(v.len() - 1);
                    let out = m.forward_with(t, x[0], params, &mut ChaCha8Rng::seed_from_u64(0)).map_err(wrap)?;
                    dice_loss_op(t, out.output, batch.clone()).map_err(wrap)
                },
                &inputs,
                sampled(CAMP1_FLOOR),
            ));
        }
        Err(e) => results.push(broken("CAMP-I dice", e)),
    }

    let batch = u(&[4, s, s, 1], 0.0, 1.0);
    let labels = [1, 0, 0, 1];
    match build_camp2::<f64>(seed, &opts) {
        Ok(mut m) => {
            let mut inputs: Vec<Tensor<f64>> = m.params.iter().map(|p| p.value.clone()).collect();
            inputs.push(batch);
            results.push(run(
                "CAMP-II bce + regularizer",
                |t, v| {
                    let (params, x) = v.split_at(v.len() - 1);
                    let out = m.forward_with(t, x[0], params, &mut ChaCha8Rng::seed_from_u64(0)).map_err(wrap)?;
                    let bce = bce_op(t, out.output, &labels).map_err(wrap)?;
                    let hidden = out.layer("dense1_act").expect("CAMP-II has dense1_act");
                    let (r, _) = sparse_regularizer_op(t, hidden, &cfg).map_err(wrap)?;
                    t.add(bce, r)
                },
                &inputs,
                sampled(CAMP2_FLOOR),
            ));
        }
        Err(e) => results.push(broken("CAMP-II bce + regularizer", e)),
    }
    results
}
