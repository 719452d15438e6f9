//! Naive reference implementations and data helpers shared by the
//! integration tests. Everything here is written with plain index loops so
//! it shares no code with the library kernels.

#![allow(dead_code)]

use camp_core::imaging::Modality;
use camp_core::synthdata::{generate_patients, LabelRule, PhantomSpec};
use camp_core::tensor::Tensor;
use camp_core::training::SliceRecord;

fn dims4(t: &Tensor<f64>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

fn same_pad(n: usize, k: usize, s: usize) -> (usize, usize) {
    let out = n.div_ceil(s);
    let total = ((out - 1) * s + k).saturating_sub(n);
    (out, total / 2)
}

/// Cross-correlation, NHWC input, `[k, k, cin, cout]` kernel.
pub fn conv2d(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize, same: bool) -> Tensor<f64> {
    let (n, h, w, cin) = dims4(x);
    let (kk, cout) = (k.shape()[0], k.shape()[3]);
    let ((oh, pt), (ow, pl)) = if same {
        (same_pad(h, kk, stride), same_pad(w, kk, stride))
    } else {
        (((h - kk) / stride + 1, 0), ((w - kk) / stride + 1, 0))
    };
    let (xd, kd, bd) = (x.data(), k.data(), b.data());
    let mut out = vec![0.0; n * oh * ow * cout];
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = bd[co];
                    for ky in 0..kk {
                        for kx in 0..kk {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv = xd[((ni * h + iy as usize) * w + ix as usize) * cin + ci];
                                acc += xv * kd[((ky * kk + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out[((ni * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, oh, ow, cout], out).unwrap()
}

/// Adjoint of a `same` stride-`s` convolution from `[n, h*s, w*s, c]` to
/// `[n, h, w, cin]`, plus bias. Kernel layout `[k, k, c, cin]`.
pub fn conv2d_transpose(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let (n, h, w, cin) = dims4(x);
    let (kk, c) = (k.shape()[0], k.shape()[2]);
    let (oh, ow) = (h * stride, w * stride);
    let (_, pt) = same_pad(oh, kk, stride);
    let (_, pl) = same_pad(ow, kk, stride);
    let (xd, kd, bd) = (x.data(), k.data(), b.data());
    let mut out = vec![0.0; n * oh * ow * c];
    for ni in 0..n {
        for y in 0..oh {
            for xo in 0..ow {
                for co in 0..c {
                    out[((ni * oh + y) * ow + xo) * c + co] = bd[co];
                }
            }
        }
        for iy in 0..h {
            for ix in 0..w {
                for ky in 0..kk {
                    for kx in 0..kk {
                        let y = (iy * stride + ky) as isize - pt as isize;
                        let xo = (ix * stride + kx) as isize - pl as isize;
                        if y < 0 || xo < 0 || y >= oh as isize || xo >= ow as isize {
                            continue;
                        }
                        for co in 0..c {
                            let mut acc = 0.0;
                            for ci in 0..cin {
                                acc +=
                                    xd[((ni * h + iy) * w + ix) * cin + ci] * kd[((ky * kk + kx) * c + co) * cin + ci];
                            }
                            out[((ni * oh + y as usize) * ow + xo as usize) * c + co] += acc;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, oh, ow, c], out).unwrap()
}

pub fn maxpool2d(x: &Tensor<f64>, size: usize) -> Tensor<f64> {
    let (n, h, w, c) = dims4(x);
    let (oh, ow) = (h / size, w / size);
    let mut out = vec![f64::NEG_INFINITY; n * oh * ow * c];
    for ni in 0..n {
        for y in 0..h {
            for xi in 0..w {
                for ci in 0..c {
                    let o = &mut out[((ni * oh + y / size) * ow + xi / size) * c + ci];
                    *o = o.max(x.data()[((ni * h + y) * w + xi) * c + ci]);
                }
            }
        }
    }
    Tensor::new(&[n, oh, ow, c], out).unwrap()
}

pub fn dense(x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let u = wt.shape()[1];
    let mut out = vec![0.0; n * u];
    for i in 0..n {
        for j in 0..u {
            let mut acc = b.data()[j];
            for l in 0..f {
                acc += x.data()[i * f + l] * wt.data()[l * u + j];
            }
            out[i * u + j] = acc;
        }
    }
    Tensor::new(&[n, u], out).unwrap()
}

/// Per-channel statistics over N*H*W (biased variance).
pub fn channel_stats(x: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
    let c = *x.shape().last().unwrap();
    let count = (x.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for (i, v) in x.data().iter().enumerate() {
        mean[i % c] += v;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; c];
    for (i, v) in x.data().iter().enumerate() {
        var[i % c] += (v - mean[i % c]).powi(2);
    }
    var.iter_mut().for_each(|s| *s /= count);
    (mean, var)
}

pub fn batchnorm(x: &Tensor<f64>, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Tensor<f64> {
    let c = gamma.len();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let ch = i % c;
            gamma[ch] * (v - mean[ch]) / (var[ch] + eps).sqrt() + beta[ch]
        })
        .collect();
    Tensor::new(x.shape(), data).unwrap()
}

/// Two-term Bernoulli KL divergence with clamped rates.
pub fn kl(p: f64, q: f64, eps: f64) -> f64 {
    let q = q.clamp(eps, 1.0 - eps);
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// Fraction of (positive, negative) pairs ranked correctly, ties as half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// The first `per_patient` Flair slices of every phantom patient.
pub fn phantom_records(spec: &PhantomSpec, per_patient: usize) -> Vec<SliceRecord<f32>> {
    let s = spec.size;
    generate_patients(spec)
        .unwrap()
        .iter()
        .flat_map(|p| {
            p.volumes[0].slices().iter().take(per_patient).map(move |sl| SliceRecord {
                patient: p.id.clone(),
                modality: Modality::Flair,
                label: Some(p.label),
                image: Tensor::new(&[s, s, 1], sl.normalized()).unwrap(),
            })
        })
        .collect()
}

pub fn texture_spec(n_patients: usize, slices: usize, size: usize, seed: u64) -> PhantomSpec {
    PhantomSpec { n_patients, slices_per_patient: slices, size, seed, rule: LabelRule::Texture }
}
