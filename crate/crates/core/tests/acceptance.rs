//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.
//!
//! `cargo test -p camp-core --test acceptance` runs everything;
//! `... --test acceptance -- 3 5` runs only criteria 3 and 5.

// `!(a < b)` is deliberate throughout: NaN must fail a bound.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use camp_core::eval::{accuracy, confusion, f1, roc_auc, sensitivity, specificity};
use camp_core::gradsuite;
use camp_core::imaging::{GraySlice, Modality, Volume};
use camp_core::losses::{adaptive_sparse_regularizer, SparsityConfig};
use camp_core::models::{
    build_camp1, build_camp2, encode_checkpoint, save_checkpoint, transfer_encoder_weights, ModelOptions,
};
use camp_core::preprocess::{equalization_map, histogram_equalize, select_slices, shannon_entropy, PreprocessConfig};
use camp_core::tensor::{Mode, Padding, Tape, Tensor};
use camp_core::training::{
    cross_validate, log_csv, train_autoencoder, train_classifier, AutoencoderTrainer, FoldPlan, TrainConfig,
};
use camp_core::Model32;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, lo, hi, r)
}

// 1 ---------------------------------------------------------------------

fn architecture_tables() -> Outcome {
    let camp1: Model32 = build_camp1(0, &ModelOptions::default()).map_err(|e| e.to_string())?;
    let camp2: Model32 =
        build_camp2(0, &ModelOptions { dropout_rate: 0.0, ..ModelOptions::default() }).map_err(|e| e.to_string())?;
    let want1 = [640, 18464, 9248, 18496, 577];
    let want2 = [640, 18464, 128, 4128, 128, 8256, 4194368, 65];
    for (model, want, total) in [(&camp1, &want1[..], 47_425), (&camp2, &want2[..], 4_226_177)] {
        let got: Vec<usize> = model.realized_table().iter().map(|r| r.2).filter(|&c| c > 0).collect();
        ensure!(got == want, "{}: per-layer counts {got:?}, want {want:?}", model.name());
        let counted = model.count_parameters().total;
        let stored: usize = model.params.iter().map(|p| p.value.len()).sum::<usize>()
            + model.buffers.iter().map(|b| b.1.len()).sum::<usize>();
        ensure!(
            counted == total && stored == total,
            "{}: total {counted} (stored {stored}), want {total}",
            model.name()
        );
    }
    Ok("CAMP-I 47425, CAMP-II 4226177".into())
}

// 2 ---------------------------------------------------------------------

fn gradient_suite() -> Outcome {
    let results = gradsuite::run_suite(2);
    let required = [
        "conv2d stride 1 same",
        "conv2d stride 2 same",
        "conv2d valid",
        "conv2d wide",
        "conv2d_transpose",
        "maxpool2d",
        "dense",
        "batchnorm train",
        "batchnorm infer",
        "leaky_relu",
        "sigmoid",
        "dropout",
        "reshape/flatten",
        "add/scale",
        "dice loss",
        "mse loss",
        "bce loss",
        "regularizer beta2 free",
        "regularizer beta2 clamped",
        "CAMP-I dice",
        "CAMP-II bce + regularizer",
    ];
    for name in required {
        ensure!(results.iter().any(|r| r.name == name), "suite has no case {name:?}");
    }
    if let Some(bad) = results.iter().find(|r| !r.passed() || !(r.max_rel_error < 1e-4)) {
        return Err(format!(
            "{}: relative error {:e} {}",
            bad.name,
            bad.max_rel_error,
            bad.error.clone().unwrap_or_default()
        ));
    }
    let worst = results.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).expect("non-empty");
    let checked: usize = results.iter().map(|r| r.checked).sum();
    let kinks: usize = results.iter().map(|r| r.kinks).sum();
    Ok(format!(
        "{} cases, {checked} elements ({kinks} across a kink), worst relative error {:.2e} ({})",
        results.len(),
        worst.max_rel_error,
        worst.name
    ))
}

// 3 ---------------------------------------------------------------------

fn forward_oracles() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut track = |name: &str, a: &Tensor<f64>, b: &Tensor<f64>| -> Result<(), String> {
        ensure!(a.shape() == b.shape(), "{name}: shape {:?} vs oracle {:?}", a.shape(), b.shape());
        let d = a.max_abs_diff(b);
        worst = worst.max(d);
        ensure!(d <= 1e-12, "{name}: max abs diff {d:e}");
        Ok(())
    };
    for case in 0..50 {
        let n = r.random_range(1..=3);
        let h = r.random_range(3..=9);
        let wd = r.random_range(3..=9);
        let cin = r.random_range(1..=10);
        let cout = r.random_range(1..=5);
        let k = *[1, 2, 3].get(case % 3).unwrap();
        let stride = r.random_range(1..=2);
        let same = case % 4 != 0;
        let x = uniform(&[n, h, wd, cin], -1.0, 1.0, &mut r);
        let kern = uniform(&[k, k, cin, cout], -1.0, 1.0, &mut r);
        let b = uniform(&[cout], -1.0, 1.0, &mut r);
        let mut t = Tape::new();
        let (xv, kv, bv) = (t.constant(x.clone()), t.constant(kern.clone()), t.constant(b.clone()));
        let pad = if same { Padding::Same } else { Padding::Valid };
        let y = t.conv2d(xv, kv, bv, stride, pad).map_err(|e| e.to_string())?;
        track(&format!("conv2d case {case}"), t.value(y), &common::conv2d(&x, &kern, &b, stride, same))?;

        // the transposed kernel maps cout back to cin
        let xt = uniform(&[n, h, wd, cout], -1.0, 1.0, &mut r);
        let bt = uniform(&[cin], -1.0, 1.0, &mut r);
        let kt = uniform(&[k, k, cin, cout], -1.0, 1.0, &mut r);
        let (xv, kv, bv) = (t.constant(xt.clone()), t.constant(kt.clone()), t.constant(bt.clone()));
        let y = t.conv2d_transpose(xv, kv, bv, stride).map_err(|e| e.to_string())?;
        track(&format!("conv2d_transpose case {case}"), t.value(y), &common::conv2d_transpose(&xt, &kt, &bt, stride))?;

        let size = r.random_range(1..=3);
        let xp = uniform(&[n, size * r.random_range(1..=4), size * r.random_range(1..=4), cin], -1.0, 1.0, &mut r);
        let xv = t.constant(xp.clone());
        let y = t.maxpool2d(xv, size).map_err(|e| e.to_string())?;
        track(&format!("maxpool2d case {case}"), t.value(y), &common::maxpool2d(&xp, size))?;

        let f = r.random_range(1..=40);
        let u = r.random_range(1..=12);
        let xd = uniform(&[n, f], -1.0, 1.0, &mut r);
        let wd_ = uniform(&[f, u], -1.0, 1.0, &mut r);
        let bd = uniform(&[u], -1.0, 1.0, &mut r);
        let (xv, wv, bv) = (t.constant(xd.clone()), t.constant(wd_.clone()), t.constant(bd.clone()));
        let y = t.dense(xv, wv, bv).map_err(|e| e.to_string())?;
        track(&format!("dense case {case}"), t.value(y), &common::dense(&xd, &wd_, &bd))?;

        let xb = uniform(&[n + 1, h, wd, cout], -3.0, 3.0, &mut r);
        let g = uniform(&[cout], 0.5, 1.5, &mut r);
        let be = uniform(&[cout], -1.0, 1.0, &mut r);
        let (xv, gv, bv) = (t.constant(xb.clone()), t.constant(g.clone()), t.constant(be.clone()));
        let (y, stats) = t.batchnorm2d_train(xv, gv, bv, 1e-5).map_err(|e| e.to_string())?;
        let (mean, var) = common::channel_stats(&xb);
        track(
            &format!("batchnorm train case {case}"),
            t.value(y),
            &common::batchnorm(&xb, g.data(), be.data(), &mean, &var, 1e-5),
        )?;
        let stat_diff = mean
            .iter()
            .zip(&stats.mean)
            .chain(var.iter().zip(&stats.var))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure!(stat_diff <= 1e-12, "batchnorm stats case {case}: {stat_diff:e}");
        let rm: Vec<f64> = (0..cout).map(|_| r.random_range(-1.0..1.0)).collect();
        let rv: Vec<f64> = (0..cout).map(|_| r.random_range(0.1..2.0)).collect();
        let y = t.batchnorm2d_infer(xv, gv, bv, &rm, &rv, 1e-5).map_err(|e| e.to_string())?;
        track(
            &format!("batchnorm infer case {case}"),
            t.value(y),
            &common::batchnorm(&xb, g.data(), be.data(), &rm, &rv, 1e-5),
        )?;
    }
    Ok(format!("50 cases per op, max abs diff {worst:.2e}"))
}

// 4 ---------------------------------------------------------------------

fn regularizer_properties() -> Outcome {
    let cfg = SparsityConfig::default();
    ensure!(cfg.p == 0.2 && cfg.beta_min == 1.0 && cfg.beta_max == 5.0, "unexpected defaults {cfg:?}");
    let mut r = rng(4);
    let mut at_target = 0;
    let mut worst: f64 = 0.0;
    for case in 0..10_000 {
        let batch = r.random_range(1..=12);
        let units = r.random_range(1..=32);
        let mut data: Vec<f64> = (0..batch * units).map(|_| r.random::<f64>()).collect();
        if case % 5 == 0 {
            // every column averages exactly p: constant p, or p +/- d pairs
            for u in 0..units {
                for b in 0..batch {
                    data[b * units + u] = 0.2;
                }
                if batch % 2 == 0 && r.random::<bool>() {
                    let d = r.random_range(0.0..0.2);
                    for b in 0..batch {
                        data[b * units + u] = if b % 2 == 0 { 0.2 + d } else { 0.2 - d };
                    }
                }
            }
        }
        let a = Tensor::new(&[batch, units], data.clone()).unwrap();
        let out = adaptive_sparse_regularizer(&a, &cfg).map_err(|e| e.to_string())?;
        ensure!(out.r >= 0.0, "case {case}: R = {}", out.r);
        ensure!((1.0..=5.0).contains(&out.beta2), "case {case}: beta2 = {}", out.beta2);

        let means: Vec<f64> =
            (0..units).map(|u| (0..batch).map(|b| data[b * units + u]).sum::<f64>() / batch as f64).collect();
        let oracle: f64 = means.iter().map(|&q| common::kl(0.2, q, cfg.epsilon)).sum();
        let diff = (oracle - out.sum_kl).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-12, "case {case}: sum_kl {} vs oracle {oracle}", out.sum_kl);

        let on_target = means.iter().all(|m| (m - 0.2).abs() <= 1e-12);
        if on_target {
            at_target += 1;
            ensure!(out.r <= 1e-20, "case {case}: means at p but R = {:e}", out.r);
        } else {
            ensure!(out.r > 0.0, "case {case}: means off p but R = 0");
        }
    }
    ensure!(at_target >= 1000, "only {at_target} on-target cases generated");
    Ok(format!("10000 cases ({at_target} at p), sum_kl max diff {worst:.2e}"))
}

// 5 ---------------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let mut r = rng(5);
    let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
    for case in 0..1000 {
        let n = r.random_range(1..=60);
        let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..=1)).collect();
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0..=20) as f64) / 20.0).collect();
        let threshold = (r.random_range(0..=20) as f64) / 20.0;
        let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&s, &l) in scores.iter().zip(&labels) {
            let pos = s >= threshold;
            match (pos, l) {
                (true, 1) => tp += 1,
                (false, 0) => tn += 1,
                (true, _) => fp += 1,
                (false, _) => fn_ += 1,
            }
        }
        let cm = confusion(&scores, &labels, threshold).map_err(|e| e.to_string())?;
        ensure!((cm.tp, cm.tn, cm.fp, cm.fn_) == (tp, tn, fp, fn_), "case {case}: confusion {cm:?}");
        let acc = ratio(tp + tn, tp + tn + fp + fn_);
        let sens = ratio(tp, tp + fn_);
        let spec = ratio(tn, tn + fp);
        let prec = ratio(tp, tp + fp);
        let f1_oracle = match (prec, sens) {
            (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
            _ => None,
        };
        ensure!(accuracy(&cm) == acc, "case {case}: accuracy {:?} vs {acc:?}", accuracy(&cm));
        ensure!(sensitivity(&cm) == sens, "case {case}: sensitivity {:?} vs {sens:?}", sensitivity(&cm));
        ensure!(specificity(&cm) == spec, "case {case}: specificity {:?} vs {spec:?}", specificity(&cm));
        ensure!(f1(&cm) == f1_oracle, "case {case}: f1 {:?} vs {f1_oracle:?}", f1(&cm));
    }
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = r.random_range(2..=200);
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..=1)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // coarse grids force ties
        let levels = if case % 2 == 0 { 10 } else { 1_000_000 };
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..=levels) as f64 / levels as f64).collect();
        let roc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?.ok_or("both classes present")?;
        let d = (roc.auc - common::pairwise_auc(&scores, &labels)).abs();
        worst = worst.max(d);
        ensure!(d <= 1e-12, "AUC case {case}: {} vs pairwise oracle, diff {d:e}", roc.auc);
    }
    Ok(format!("1000 confusion cases exact, 200 AUC cases max diff {worst:.2e}"))
}

// 6 ---------------------------------------------------------------------

fn preprocessing_properties() -> Outcome {
    let constant = GraySlice::filled(64, 64, 77);
    let h0 = shannon_entropy(&constant).map_err(|e| e.to_string())?;
    ensure!(h0 == 0.0, "constant slice entropy {h0}");
    let uniform_slice = GraySlice::from_fn(256, 256, |x, y| ((x + y * 256) % 256) as u8);
    let h8 = shannon_entropy(&uniform_slice).map_err(|e| e.to_string())?;
    ensure!(h8 == 8.0, "256-level uniform entropy {h8}");

    let mut r = rng(6);
    for case in 0..200 {
        let (w, h) = (r.random_range(1..=40), r.random_range(1..=40));
        let lo = r.random_range(0..=255u8);
        let hi = r.random_range(lo..=255u8);
        let s = GraySlice::from_fn(w, h, |_, _| r.random_range(lo..=hi));
        let map = equalization_map(&s);
        ensure!(map.windows(2).all(|p| p[0] <= p[1]), "case {case}: map not monotone");
        let once = histogram_equalize(&s);
        let twice = histogram_equalize(&once);
        let drift = once.data().iter().zip(twice.data()).map(|(&a, &b)| (a as i32 - b as i32).abs()).max().unwrap();
        ensure!(drift <= 1, "case {case}: equalizing twice moved a pixel by {drift} levels");
    }

    let spec = common::texture_spec(1, 5, 256, 6);
    let patients = camp_core::synthdata::generate_patients(&spec).map_err(|e| e.to_string())?;
    let phantoms = patients[0].volumes[0].slices().to_vec();
    let mut mixed = Vec::new();
    for p in &phantoms {
        mixed.push(GraySlice::filled(256, 256, 0));
        mixed.push(p.clone());
    }
    let volume = Volume::new("P0000", Modality::Flair, mixed).map_err(|e| e.to_string())?;
    let (kept, quality) = select_slices(&volume, &PreprocessConfig::default()).map_err(|e| e.to_string())?;
    ensure!(kept.slices() == phantoms.as_slice(), "gate kept {} slices", kept.len());
    ensure!(quality.iter().map(|q| q.selected).eq((0..10).map(|i| i % 2 == 1)), "gate flags {quality:?}");
    Ok("entropy 0 and 8 bits, 200 equalization cases, gate kept 5/10".into())
}

// 7 ---------------------------------------------------------------------

fn overfit_capacity() -> Outcome {
    let start = Instant::now();
    let data: Vec<Tensor<f32>> =
        common::phantom_records(&common::texture_spec(4, 4, 256, 1), 4).into_iter().map(|r| r.image).collect();
    ensure!(data.len() == 16, "{} slices", data.len());
    let cfg = TrainConfig { seed: 1, batch_size: 4, learning_rate: 1e-3, noise_sigma: 0.05, ..TrainConfig::default() };
    let mut trainer = AutoencoderTrainer::new(&data, &[], &cfg).map_err(|e| e.to_string())?;
    let refs: Vec<&Tensor<f32>> = data.iter().collect();
    let mut best = f64::INFINITY;
    for epoch in 1..=200 {
        let rec = trainer.run_epoch().map_err(|e| e.to_string())?;
        // the running figure trails the clean one; skip the extra pass until close
        if rec.rmse.unwrap_or(1.0) > 0.06 {
            continue;
        }
        let (_, rmse) = trainer.evaluate(&refs).map_err(|e| e.to_string())?;
        best = best.min(rmse);
        if rmse < 0.05 {
            return Ok(format!("train RMSE {rmse:.4} after {epoch} epochs ({:.0} s)", start.elapsed().as_secs_f64()));
        }
    }
    Err(format!("best train RMSE {best:.4} after 200 epochs"))
}

// 8 ---------------------------------------------------------------------

fn classifier_learnability() -> Outcome {
    let start = Instant::now();
    // the encoder is pretrained on a disjoint phantom cohort
    let pretrain: Vec<Tensor<f32>> =
        common::phantom_records(&common::texture_spec(16, 2, 64, 100), 2).into_iter().map(|r| r.image).collect();
    let ae_cfg = TrainConfig { epochs: 20, batch_size: 4, ..TrainConfig::default() };
    let (encoder, _) = train_autoencoder(&pretrain, &[], &ae_cfg).map_err(|e| e.to_string())?;

    let records = common::phantom_records(&common::texture_spec(64, 1, 64, 7), 1);
    let positives = records.iter().filter(|r| r.label == Some(1)).count();
    ensure!(records.len() == 64 && positives == 32, "dataset has {positives}/{} positives", records.len());
    let ids: Vec<String> = records.iter().map(|r| r.patient.clone()).collect();
    let plan = FoldPlan::from_patients(&ids, 10, 7).map_err(|e| e.to_string())?;
    let cfg =
        TrainConfig { epochs: 60, batch_size: 8, learning_rate: 5e-4, dropout_rate: 0.0, ..TrainConfig::default() };
    let report = cross_validate(&records, &plan, &encoder, &cfg).map_err(|e| e.to_string())?;
    let (train_acc, val_acc) = (report.mean_train_accuracy(), report.pooled_val_accuracy());
    let summary = format!("train {train_acc:.3}, held-out {val_acc:.3} ({:.0} s)", start.elapsed().as_secs_f64());
    ensure!(train_acc >= 0.95 && val_acc >= 0.80, "{summary}");
    Ok(summary)
}

// 9 ---------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<(Vec<u8>, String, Vec<u8>, String, Vec<u8>), String> {
        let records = common::phantom_records(&common::texture_spec(8, 2, 32, 9), 2);
        let images: Vec<Tensor<f32>> = records.iter().map(|r| r.image.clone()).collect();
        let (train, val) = images.split_at(12);
        let cfg = TrainConfig { epochs: 3, batch_size: 4, seed: 21, ..TrainConfig::default() };
        let (ae, ae_log) = train_autoencoder(train, val, &cfg).map_err(|e| e.to_string())?;
        let (clf, clf_log, steps) =
            train_classifier(&records[..12], &records[12..], &ae, &cfg).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{tag}.ckpt"));
        save_checkpoint(&clf, &path).map_err(|e| e.to_string())?;
        let file = std::fs::read(&path).map_err(|e| e.to_string())?;
        Ok((
            encode_checkpoint(&ae),
            log_csv(&ae_log),
            encode_checkpoint(&clf),
            format!("{}{steps:?}", log_csv(&clf_log)),
            file,
        ))
    };
    let a = run("a")?;
    let b = run("b")?;
    ensure!(a.0 == b.0, "autoencoder checkpoints differ");
    ensure!(a.1 == b.1, "autoencoder logs differ");
    ensure!(a.2 == b.2, "classifier checkpoints differ");
    ensure!(a.3 == b.3, "classifier logs differ");
    ensure!(a.4 == b.4 && a.4 == a.2, "checkpoint files differ");
    Ok(format!("checkpoints ({} + {} bytes) and logs identical", a.0.len(), a.2.len()))
}

// 10 --------------------------------------------------------------------

fn transfer_exactness() -> Outcome {
    let mut source: Model32 = build_camp1(10, &ModelOptions::default()).map_err(|e| e.to_string())?;
    let mut target: Model32 = build_camp2(11, &ModelOptions::default()).map_err(|e| e.to_string())?;
    transfer_encoder_weights(&source, &mut target).map_err(|e| e.to_string())?;
    source.set_mode(Mode::Infer);
    target.set_mode(Mode::Infer);
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let x = Tensor::<f32>::uniform(&[1, 256, 256, 1], 0.0, 1.0, &mut r);
        let mut ts = Tape::new();
        let xs = ts.constant(x.clone());
        let fs = source.forward(&mut ts, xs, &mut r).map_err(|e| e.to_string())?;
        let mut tt = Tape::new();
        let xt = tt.constant(x);
        let ft = target.forward(&mut tt, xt, &mut r).map_err(|e| e.to_string())?;
        for layer in ["conv1_act", "pool1", "conv2_act", "pool2"] {
            let a = ts.value(fs.layer(layer).ok_or("missing source layer")?);
            let b = tt.value(ft.layer(layer).ok_or("missing target layer")?);
            ensure!(a.shape() == b.shape(), "input {i} {layer}: {:?} vs {:?}", a.shape(), b.shape());
            let d = a.max_abs_diff(b);
            worst = worst.max(d);
            ensure!(d <= 1e-6, "input {i} {layer}: max abs diff {d:e}");
        }
    }
    Ok(format!("20 inputs, encoder activations max abs diff {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("architecture tables", architecture_tables),
        ("gradient suite", gradient_suite),
        ("forward oracles", forward_oracles),
        ("regularizer properties", regularizer_properties),
        ("metric oracles", metric_oracles),
        ("preprocessing properties", preprocessing_properties),
        ("overfit capacity", overfit_capacity),
        ("classifier learnability", classifier_learnability),
        ("determinism", determinism),
        ("transfer exactness", transfer_exactness),
    ];
    // libtest flags (e.g. --nocapture) are ignored; bare numbers select criteria
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut total = Duration::ZERO;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        total += elapsed;
        match outcome {
            Ok(detail) => println!("criterion {id:>2} {name}: PASS [{:.1} s] {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} {name}: FAIL [{:.1} s] {detail}", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {failed} failed, {:.0} s total", total.as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
