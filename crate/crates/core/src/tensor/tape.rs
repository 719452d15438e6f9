//! Reverse-mode tape.
//!
//! Every op appends a node holding its forward value and whatever context
//! its backward needs. Nodes are created in topological order, so backward
//! is a single reverse sweep over the node list.

use std::hash::{Hash, Hasher};

use rand::Rng;

use super::conv::{self, ConvGeometry, Padding};
use super::{shape_err, Result, Tensor, TensorError};
use crate::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-channel batch statistics produced by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Population (biased) variance.
    pub var: Vec<T>,
}

/// An op defined outside this module (the loss terms). `backward` returns
/// one gradient per input, `None` for inputs that take no gradient.
pub trait CustomOp<T: Scalar> {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>>;
}

enum Op<T: Scalar> {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        b: Var,
        g: ConvGeometry,
    },
    ConvTranspose {
        x: Var,
        k: Var,
        b: Var,
        g: ConvGeometry,
    },
    MaxPool {
        x: Var,
        arg: Vec<usize>,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    BatchNormInfer {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    LeakyRelu {
        x: Var,
        alpha: T,
    },
    Sigmoid {
        x: Var,
    },
    /// Elementwise multiply by a fixed mask (dropout).
    Mask {
        x: Var,
        mask: Vec<T>,
    },
    Reshape {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    WeightedSum {
        x: Var,
        w: Tensor<T>,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn channels_last(shape: &[usize]) -> usize {
    *shape.last().unwrap_or(&0)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a leaf whose gradient is wanted.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`backward`](Self::backward) loss w.r.t. the
    /// leaf `v`. Intermediate gradients are freed during the sweep.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Hash of every branch taken so far: the sign of each leaky ReLU input
    /// and each max-pool argmax. Two evaluations with equal signatures lie
    /// in the same smooth piece of a piecewise-smooth graph.
    pub fn branch_signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::LeakyRelu { x, .. } => {
                    i.hash(&mut h);
                    for v in self.nodes[x.0].value.data() {
                        (*v >= T::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool { arg, .. } => {
                    i.hash(&mut h);
                    arg.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x), self.shape(k), self.shape(b));
        if xs.len() != 4 || ks.len() != 4 || ks[0] != ks[1] || bs != [ks[3]] {
            return shape_err("conv2d", format!("input {xs:?}, kernel {ks:?}, bias {bs:?}"));
        }
        if xs[3] != ks[2] {
            return shape_err("conv2d", format!("input has {} channels, kernel expects {}", xs[3], ks[2]));
        }
        let g = ConvGeometry::new(xs[1], xs[2], xs[3], ks[0], stride, padding)?;
        let (n, c_out) = (xs[0], ks[3]);
        let data = conv::conv_forward(&g, n, self.value(x).data(), self.value(k).data(), self.value(b).data(), c_out);
        let value = Tensor::new(&[n, g.out_h, g.out_w, c_out], data)?;
        let rg = self.rg(&[x, k, b]);
        Ok(self.push(value, Op::Conv2d { x, k, b, g }, rg))
    }

    /// Transposed convolution with `same`-style cropping: output spatial
    /// size is exactly `stride` times the input. `k` has the layout of the
    /// forward convolution it is the adjoint of, `[k, k, C_out, C_in]`.
    pub fn conv2d_transpose(&mut self, x: Var, k: Var, b: Var, stride: usize) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x), self.shape(k), self.shape(b));
        if xs.len() != 4 || ks.len() != 4 || ks[0] != ks[1] || bs != [ks[2]] {
            return shape_err("conv2d_transpose", format!("input {xs:?}, kernel {ks:?}, bias {bs:?}"));
        }
        if xs[3] != ks[3] {
            return shape_err("conv2d_transpose", format!("input has {} channels, kernel expects {}", xs[3], ks[3]));
        }
        if stride == 0 {
            return Err(TensorError::Argument { op: "conv2d_transpose", detail: "stride must be positive".into() });
        }
        let g = ConvGeometry::new(xs[1] * stride, xs[2] * stride, ks[2], ks[0], stride, Padding::Same)?;
        debug_assert_eq!((g.out_h, g.out_w), (xs[1], xs[2]));
        let n = xs[0];
        let data = conv::conv_transpose_forward(
            &g,
            n,
            self.value(x).data(),
            self.value(k).data(),
            self.value(b).data(),
            ks[3],
        );
        let value = Tensor::new(&[n, g.in_h, g.in_w, g.channels], data)?;
        let rg = self.rg(&[x, k, b]);
        Ok(self.push(value, Op::ConvTranspose { x, k, b, g }, rg))
    }

    /// `size x size` max pooling with stride `size`.
    pub fn maxpool2d(&mut self, x: Var, size: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || size == 0 {
            return shape_err("maxpool2d", format!("input {xs:?}, window {size}"));
        }
        if !xs[1].is_multiple_of(size) || !xs[2].is_multiple_of(size) {
            return shape_err("maxpool2d", format!("spatial dims {}x{} not divisible by {size}", xs[1], xs[2]));
        }
        let (data, arg) = conv::maxpool_forward(&xs, self.value(x).data(), size);
        let value = Tensor::new(&[xs[0], xs[1] / size, xs[2] / size, xs[3]], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::MaxPool { x, arg }, rg))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
            return shape_err("dense", format!("input {xs:?}, weights {ws:?}, bias {bs:?}"));
        }
        let (n, f, u) = (xs[0], xs[1], ws[1]);
        let mut out = vec![T::zero(); n * u];
        T::gemm(
            n,
            f,
            u,
            T::one(),
            self.value(x).data(),
            f as isize,
            1,
            self.value(w).data(),
            u as isize,
            1,
            T::zero(),
            &mut out,
            u as isize,
            1,
        );
        let bias = self.value(b).data();
        for row in out.chunks_exact_mut(u) {
            for (v, &bb) in row.iter_mut().zip(bias) {
                *v += bb;
            }
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::new(&[n, u], out)?, Op::Dense { x, w, b }, rg))
    }

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<usize> {
        let c = channels_last(self.shape(x));
        if self.shape(x).len() != 4 || self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return shape_err(
                "batchnorm2d",
                format!("input {:?}, gamma {:?}, beta {:?}", self.shape(x), self.shape(gamma), self.shape(beta)),
            );
        }
        Ok(c)
    }

    fn bn_apply(&self, x: Var, gamma: Var, beta: Var, mean: &[T], inv_std: &[T]) -> (Tensor<T>, Vec<T>) {
        let xv = self.value(x);
        let c = mean.len();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = Vec::with_capacity(xv.len());
        let mut out = Vec::with_capacity(xv.len());
        for px in xv.data().chunks_exact(c) {
            for ch in 0..c {
                let h = (px[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                out.push(g[ch] * h + b[ch]);
            }
        }
        (Tensor::new(xv.shape(), out).expect("same shape"), xhat)
    }

    /// Batch norm with batch statistics over `N*H*W` per channel.
    pub fn batchnorm2d_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats<T>)> {
        let c = self.check_bn(x, gamma, beta)?;
        let count = self.value(x).len() / c.max(1);
        if count < 2 {
            return Err(TensorError::Argument {
                op: "batchnorm2d",
                detail: format!("train mode needs N*H*W >= 2, got {count}"),
            });
        }
        let xv = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        for px in xv.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v;
            }
        }
        let cnt = T::from_usize_lossy(count);
        mean.iter_mut().for_each(|m| *m /= cnt);
        let mut var = vec![T::zero(); c];
        for px in xv.chunks_exact(c) {
            for ch in 0..c {
                let d = px[ch] - mean[ch];
                var[ch] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= cnt);
        let eps = T::from_f64_lossy(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
        let (value, xhat) = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let rg = self.rg(&[x, gamma, beta]);
        let var_out = self.push(value, Op::BatchNormTrain { x, gamma, beta, xhat, inv_std }, rg);
        Ok((var_out, BatchStats { mean, var }))
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batchnorm2d_infer(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: f64) -> Result<Var> {
        let c = self.check_bn(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return shape_err("batchnorm2d", format!("running stats of length {} for {c} channels", mean.len()));
        }
        let eps = T::from_f64_lossy(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
        let (value, xhat) = self.bn_apply(x, gamma, beta, mean, &inv_std);
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(value, Op::BatchNormInfer { x, gamma, beta, xhat, inv_std }, rg))
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let a = T::from_f64_lossy(alpha);
        let value = self.value(x).map(|v| if v > T::zero() { v } else { a * v });
        let rg = self.rg(&[x]);
        self.push(value, Op::LeakyRelu { x, alpha: a }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(stable_sigmoid);
        let rg = self.rg(&[x]);
        self.push(value, Op::Sigmoid { x }, rg)
    }

    /// Inverted dropout in train mode, identity otherwise.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Argument { op: "dropout", detail: format!("rate {rate} outside [0, 1)") });
        }
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(x);
        }
        let scale = T::from_f64_lossy(1.0 / (1.0 - rate));
        let mask: Vec<T> =
            (0..self.value(x).len()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { scale }).collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(xv.shape(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Mask { x, mask }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Collapses everything but the batch axis.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let n = s[0];
        let f = s[1..].iter().product();
        self.reshape(x, &[n, f])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64_lossy(c);
        let value = self.value(x).map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale { x, c }, rg)
    }

    /// `sum(x * w)` for a fixed weight tensor; turns any output into a
    /// scalar for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, w: Tensor<T>) -> Result<Var> {
        if self.shape(x) != w.shape() {
            return shape_err("weighted_sum", format!("{:?} vs {:?}", self.shape(x), w.shape()));
        }
        let value = Tensor::scalar(self.value(x).dot(&w));
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::WeightedSum { x, w }, rg))
    }

    pub fn custom(&mut self, inputs: &[Var], value: Tensor<T>, op: Box<dyn CustomOp<T>>) -> Var {
        let rg = self.rg(inputs);
        self.push(value, Op::Custom { inputs: inputs.to_vec(), op }, rg)
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates from a one-element `loss`. May run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(ls.to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(gy);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            let need = |v: &Var| self.nodes[v.0].requires_grad;
            let val = |v: &Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { x, k, b, g } => {
                    let c_out = val(k).shape()[3];
                    let (dx, dk, db) =
                        conv::conv_backward(g, val(x).batch(), val(x).data(), val(k).data(), c_out, gy.data(), need(x));
                    if let Some(dx) = dx {
                        Self::accumulate(&mut grads, *x, Tensor::new(val(x).shape(), dx)?);
                    }
                    Self::accumulate(&mut grads, *k, Tensor::new(val(k).shape(), dk)?);
                    Self::accumulate(&mut grads, *b, Tensor::new(val(b).shape(), db)?);
                }
                Op::ConvTranspose { x, k, b, g } => {
                    let c_y = val(k).shape()[3];
                    let (dx, dk, db) = conv::conv_transpose_backward(
                        g,
                        val(x).batch(),
                        val(x).data(),
                        val(k).data(),
                        c_y,
                        gy.data(),
                        need(x),
                    );
                    if let Some(dx) = dx {
                        Self::accumulate(&mut grads, *x, Tensor::new(val(x).shape(), dx)?);
                    }
                    Self::accumulate(&mut grads, *k, Tensor::new(val(k).shape(), dk)?);
                    Self::accumulate(&mut grads, *b, Tensor::new(val(b).shape(), db)?);
                }
                Op::MaxPool { x, arg } => {
                    let mut dx = Tensor::zeros(val(x).shape());
                    for (&src, &g) in arg.iter().zip(gy.data()) {
                        dx.data_mut()[src] += g;
                    }
                    Self::accumulate(&mut grads, *x, dx);
                }
                Op::Dense { x, w, b } => {
                    let (n, f) = (val(x).shape()[0], val(x).shape()[1]);
                    let u = val(w).shape()[1];
                    if need(x) {
                        let mut dx = vec![T::zero(); n * f];
                        T::gemm(
                            n,
                            u,
                            f,
                            T::one(),
                            gy.data(),
                            u as isize,
                            1,
                            val(w).data(),
                            1,
                            u as isize,
                            T::zero(),
                            &mut dx,
                            f as isize,
                            1,
                        );
                        Self::accumulate(&mut grads, *x, Tensor::new(&[n, f], dx)?);
                    }
                    let mut dw = vec![T::zero(); f * u];
                    T::gemm(
                        f,
                        n,
                        u,
                        T::one(),
                        val(x).data(),
                        1,
                        f as isize,
                        gy.data(),
                        u as isize,
                        1,
                        T::zero(),
                        &mut dw,
                        u as isize,
                        1,
                    );
                    Self::accumulate(&mut grads, *w, Tensor::new(&[f, u], dw)?);
                    let mut db = vec![T::zero(); u];
                    for row in gy.data().chunks_exact(u) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    Self::accumulate(&mut grads, *b, Tensor::new(&[u], db)?);
                }
                Op::BatchNormTrain { x, gamma, beta, xhat, inv_std }
                | Op::BatchNormInfer { x, gamma, beta, xhat, inv_std } => {
                    let train = matches!(node.op, Op::BatchNormTrain { .. });
                    let c = inv_std.len();
                    let gv = val(gamma).data();
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for (dy, h) in gy.data().chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for ch in 0..c {
                            dbeta[ch] += dy[ch];
                            dgamma[ch] += dy[ch] * h[ch];
                        }
                    }
                    if need(x) {
                        let mut dx = Vec::with_capacity(gy.len());
                        if train {
                            let m = T::from_usize_lossy(gy.len() / c);
                            for (dy, h) in gy.data().chunks_exact(c).zip(xhat.chunks_exact(c)) {
                                for ch in 0..c {
                                    let v = gv[ch] * inv_std[ch] / m * (m * dy[ch] - dbeta[ch] - h[ch] * dgamma[ch]);
                                    dx.push(v);
                                }
                            }
                        } else {
                            for dy in gy.data().chunks_exact(c) {
                                for ch in 0..c {
                                    dx.push(gv[ch] * inv_std[ch] * dy[ch]);
                                }
                            }
                        }
                        Self::accumulate(&mut grads, *x, Tensor::new(val(x).shape(), dx)?);
                    }
                    Self::accumulate(&mut grads, *gamma, Tensor::new(&[c], dgamma)?);
                    Self::accumulate(&mut grads, *beta, Tensor::new(&[c], dbeta)?);
                }
                Op::LeakyRelu { x, alpha } => {
                    let data = val(x)
                        .data()
                        .iter()
                        .zip(gy.data())
                        .map(|(&v, &g)| if v > T::zero() { g } else { *alpha * g })
                        .collect();
                    Self::accumulate(&mut grads, *x, Tensor::new(val(x).shape(), data)?);
                }
                Op::Sigmoid { x } => {
                    let data = node.value.data().iter().zip(gy.data()).map(|(&s, &g)| g * s * (T::one() - s)).collect();
                    Self::accumulate(&mut grads, *x, Tensor::new(val(x).shape(), data)?);
                }
                Op::Mask { x, mask } => {
                    let data = mask.iter().zip(gy.data()).map(|(&m, &g)| m * g).collect();
                    Self::accumulate(&mut grads, *x, Tensor::new(val(x).shape(), data)?);
                }
                Op::Reshape { x } => {
                    let g = gy.reshape(val(x).shape())?;
                    Self::accumulate(&mut grads, *x, g);
                }
                Op::Add { a, b } => {
                    Self::accumulate(&mut grads, *a, gy.clone());
                    Self::accumulate(&mut grads, *b, gy);
                }
                Op::Scale { x, c } => {
                    Self::accumulate(&mut grads, *x, gy.map(|g| g * *c));
                }
                Op::WeightedSum { x, w } => {
                    let s = gy.item();
                    Self::accumulate(&mut grads, *x, w.map(|v| v * s));
                }
                Op::Custom { inputs, op } => {
                    let ins: Vec<&Tensor<T>> = inputs.iter().map(&val).collect();
                    let gs = op.backward(&ins, &node.value, &gy);
                    for (v, g) in inputs.iter().zip(gs) {
                        if let Some(g) = g {
                            if g.shape() != val(v).shape() {
                                return shape_err(
                                    op.name(),
                                    format!("gradient {:?} for input {:?}", g.shape(), val(v).shape()),
                                );
                            }
                            Self::accumulate(&mut grads, *v, g);
                        }
                    }
                }
            }
        }
        self.grads = grads;
        Ok(())
    }
}

#[inline]
pub(crate) fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
