//! The CAMP-I autoencoder and CAMP-II classifier.
//!
//! Both networks are built layer by layer from a fixed pattern. After
//! construction every tabulated layer's realized output shape and parameter
//! count is compared against the reference layer tables (scaled to the
//! requested input size); a disagreement is a build bug and panics.
//!
//! CAMP-II has a `Reshape` from `(64, 64, 32)` to `(64, 64, 32)`. It is
//! kept as an identity layer.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{Mode, Padding, Parameter, Tape, Tensor, TensorError, Var};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input size {0} unsupported: must be a positive multiple of {1}")]
    InputSize(usize, usize),
    #[error("expected a {expected} model, got {found}")]
    WrongArchitecture { expected: Architecture, found: Architecture },
    #[error("parameter {name}: shape {found:?} does not match {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Convolutional autoencoder used for feature learning.
    Camp1,
    /// Classifier that reuses the CAMP-I encoder.
    Camp2,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Camp1 => "camp1",
            Architecture::Camp2 => "camp2",
        }
    }

    /// Input sides must be a multiple of this (one factor 2 per pooling).
    pub fn size_multiple(self) -> usize {
        match self {
            Architecture::Camp1 => 4,
            Architecture::Camp2 => 8,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "camp1" => Ok(Architecture::Camp1),
            "camp2" => Ok(Architecture::Camp2),
            _ => Err(format!("unknown architecture {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    /// Input side length; 256 for the full-size networks, 32/64 for
    /// scaled-down variants with the same layer pattern.
    pub input_size: usize,
    pub leaky_alpha: f64,
    /// CAMP-II only: dropout after each max-pool. 0 matches the reference layer list.
    pub dropout_rate: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { input_size: 256, leaky_alpha: 0.01, dropout_rate: 0.25, bn_epsilon: 1e-5, bn_momentum: 0.9 }
    }
}

impl ModelOptions {
    pub fn with_size(input_size: usize) -> Self {
        Self { input_size, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input,
    Conv { filters: usize, kernel: usize, stride: usize },
    ConvTranspose { filters: usize, kernel: usize, stride: usize },
    MaxPool { size: usize },
    BatchNorm,
    Dense { units: usize },
    Activation(Activation),
    Dropout { rate: f64 },
    Flatten,
    Reshape { shape: Vec<usize> },
}

impl LayerKind {
    /// Layers that appear as rows of the reference layer lists (activations
    /// and dropout are folded into their neighbours there).
    pub fn is_tabulated(&self) -> bool {
        !matches!(self, LayerKind::Activation(_) | LayerKind::Dropout { .. })
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            LayerKind::Input => "InputLayer",
            LayerKind::Conv { .. } => "Conv2D",
            LayerKind::ConvTranspose { .. } => "Conv2DTranspose",
            LayerKind::MaxPool { .. } => "MaxPooling2D",
            LayerKind::BatchNorm => "BatchNormalization",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::Activation(Activation::LeakyRelu(_)) => "LeakyReLU",
            LayerKind::Activation(Activation::Sigmoid) => "Sigmoid",
            LayerKind::Dropout { .. } => "Dropout",
            LayerKind::Flatten => "Flatten",
            LayerKind::Reshape { .. } => "Reshape",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Output shape without the batch axis.
    pub output_shape: Vec<usize>,
    /// Trainable plus non-trainable (batch-norm running statistics).
    pub param_count: usize,
}

/// Reference per-layer rows of CAMP-I: type, output shape at 256x256 input, count.
pub const CAMP1_LAYERS: &[(&str, [usize; 3], usize)] = &[
    ("InputLayer", [256, 256, 1], 0),
    ("Conv2D", [256, 256, 64], 640),
    ("MaxPooling2D", [128, 128, 64], 0),
    ("Conv2D", [128, 128, 32], 18464),
    ("MaxPooling2D", [64, 64, 32], 0),
    ("Conv2DTranspose", [128, 128, 32], 9248),
    ("Conv2DTranspose", [256, 256, 64], 18496),
    ("Conv2D", [256, 256, 1], 577),
];

/// As [`CAMP1_LAYERS`], for CAMP-II; 1-D outputs use the first entry only.
pub const CAMP2_LAYERS: &[(&str, [usize; 3], usize)] = &[
    ("InputLayer", [256, 256, 1], 0),
    ("Conv2D", [256, 256, 64], 640),
    ("MaxPooling2D", [128, 128, 64], 0),
    ("Conv2D", [128, 128, 32], 18464),
    ("MaxPooling2D", [64, 64, 32], 0),
    ("Reshape", [64, 64, 32], 0),
    ("BatchNormalization", [64, 64, 32], 128),
    ("Conv2D", [64, 64, 32], 4128),
    ("MaxPooling2D", [32, 32, 32], 0),
    ("BatchNormalization", [32, 32, 32], 128),
    ("Conv2D", [32, 32, 64], 8256),
    ("Flatten", [65536, 0, 0], 0),
    ("Dense", [64, 0, 0], 4194368),
    ("Dense", [1, 0, 0], 65),
];

pub const CAMP1_TOTAL: usize = 47_425;
pub const CAMP2_TOTAL: usize = 4_226_177;

/// Table rows scaled to `input_size`: spatial extents scale linearly, the
/// flatten width and the first dense layer's count follow from them.
pub fn declared_table(arch: Architecture, input_size: usize) -> Vec<(String, Vec<usize>, usize)> {
    let scale = |v: usize| v * input_size / 256;
    match arch {
        Architecture::Camp1 => {
            CAMP1_LAYERS.iter().map(|(t, s, c)| (t.to_string(), vec![scale(s[0]), scale(s[1]), s[2]], *c)).collect()
        }
        Architecture::Camp2 => {
            let flat = (input_size / 8) * (input_size / 8) * 64;
            CAMP2_LAYERS
                .iter()
                .map(|(t, s, c)| match *t {
                    "Flatten" => (t.to_string(), vec![flat], 0),
                    "Dense" if s[0] == 64 => (t.to_string(), vec![64], flat * 64 + 64),
                    "Dense" => (t.to_string(), vec![s[0]], *c),
                    _ => (t.to_string(), vec![scale(s[0]), scale(s[1]), s[2]], *c),
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCounts {
    /// Every layer in build order with its count.
    pub per_layer: Vec<(String, usize)>,
    pub total: usize,
}

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: Var,
    /// Output of every layer, by layer name, in order.
    pub layers: Vec<(String, Var)>,
}

impl Forward {
    pub fn layer(&self, name: &str) -> Option<Var> {
        self.layers.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// A built network: layer list, trainable parameters and batch-norm
/// running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph<T: Scalar> {
    pub architecture: Architecture,
    pub options: ModelOptions,
    pub seed: u64,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<Parameter<T>>,
    /// Non-trainable tensors (`<bn>.running_mean`, `<bn>.running_var`).
    pub buffers: Vec<(String, Tensor<T>)>,
    pub mode: Mode,
}

struct Builder<T: Scalar> {
    rng: ChaCha8Rng,
    layers: Vec<LayerSpec>,
    params: Vec<Parameter<T>>,
    buffers: Vec<(String, Tensor<T>)>,
    shape: Vec<usize>,
}

impl<T: Scalar> Builder<T> {
    fn new(seed: u64, size: usize) -> Self {
        let mut b = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            layers: Vec::new(),
            params: Vec::new(),
            buffers: Vec::new(),
            shape: vec![size, size, 1],
        };
        b.layer("input", LayerKind::Input, 0);
        b
    }

    fn layer(&mut self, name: &str, kind: LayerKind, params: usize) {
        self.layers.push(LayerSpec { name: name.into(), kind, output_shape: self.shape.clone(), param_count: params });
    }

    fn he_uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let limit = (6.0 / fan_in as f64).sqrt();
        Tensor::uniform(shape, -limit, limit, &mut self.rng)
    }

    fn add_param(&mut self, name: String, value: Tensor<T>) -> usize {
        let n = value.len();
        self.params.push(Parameter::new(name, value));
        n
    }

    fn conv(&mut self, name: &str, filters: usize, kernel: usize) {
        let c_in = self.shape[2];
        let k = self.he_uniform(&[kernel, kernel, c_in, filters], kernel * kernel * c_in);
        let mut n = self.add_param(format!("{name}.kernel"), k);
        n += self.add_param(format!("{name}.bias"), Tensor::zeros(&[filters]));
        self.shape[2] = filters;
        self.layer(name, LayerKind::Conv { filters, kernel, stride: 1 }, n);
    }

    fn conv_transpose(&mut self, name: &str, filters: usize, kernel: usize, stride: usize) {
        let c_in = self.shape[2];
        let k = self.he_uniform(&[kernel, kernel, filters, c_in], kernel * kernel * c_in);
        let mut n = self.add_param(format!("{name}.kernel"), k);
        n += self.add_param(format!("{name}.bias"), Tensor::zeros(&[filters]));
        self.shape = vec![self.shape[0] * stride, self.shape[1] * stride, filters];
        self.layer(name, LayerKind::ConvTranspose { filters, kernel, stride }, n);
    }

    fn act(&mut self, name: &str, a: Activation) {
        self.layer(name, LayerKind::Activation(a), 0);
    }

    fn pool(&mut self, name: &str) {
        self.shape[0] /= 2;
        self.shape[1] /= 2;
        self.layer(name, LayerKind::MaxPool { size: 2 }, 0);
    }

    fn dropout(&mut self, name: &str, rate: f64) {
        if rate > 0.0 {
            self.layer(name, LayerKind::Dropout { rate }, 0);
        }
    }

    fn batchnorm(&mut self, name: &str) {
        let c = self.shape[2];
        let mut n = self.add_param(format!("{name}.gamma"), Tensor::full(&[c], T::one()));
        n += self.add_param(format!("{name}.beta"), Tensor::zeros(&[c]));
        self.buffers.push((format!("{name}.running_mean"), Tensor::zeros(&[c])));
        self.buffers.push((format!("{name}.running_var"), Tensor::full(&[c], T::one())));
        n += 2 * c;
        self.layer(name, LayerKind::BatchNorm, n);
    }

    fn dense(&mut self, name: &str, units: usize) {
        let f = self.shape[0];
        let w = self.he_uniform(&[f, units], f);
        let mut n = self.add_param(format!("{name}.kernel"), w);
        n += self.add_param(format!("{name}.bias"), Tensor::zeros(&[units]));
        self.shape = vec![units];
        self.layer(name, LayerKind::Dense { units }, n);
    }

    fn finish(self, arch: Architecture, options: ModelOptions, seed: u64) -> ModelGraph<T> {
        let model = ModelGraph {
            architecture: arch,
            options,
            seed,
            layers: self.layers,
            params: self.params,
            buffers: self.buffers,
            mode: Mode::Train,
        };
        model.assert_matches_table();
        model
    }
}

fn check_size(arch: Architecture, size: usize) -> Result<()> {
    let m = arch.size_multiple();
    if size == 0 || !size.is_multiple_of(m) {
        return Err(ModelError::InputSize(size, m));
    }
    Ok(())
}

/// Builds CAMP-I with He-uniform kernels drawn from `seed` and zero biases.
pub fn build_camp1<T: Scalar>(seed: u64, options: &ModelOptions) -> Result<ModelGraph<T>> {
    check_size(Architecture::Camp1, options.input_size)?;
    let leaky = Activation::LeakyRelu(options.leaky_alpha);
    let mut b = Builder::new(seed, options.input_size);
    b.conv("conv1", 64, 3);
    b.act("conv1_act", leaky);
    b.pool("pool1");
    b.conv("conv2", 32, 3);
    b.act("conv2_act", leaky);
    b.pool("pool2");
    b.conv_transpose("deconv1", 32, 3, 2);
    b.act("deconv1_act", leaky);
    b.conv_transpose("deconv2", 64, 3, 2);
    b.act("deconv2_act", leaky);
    b.conv("conv_out", 1, 3);
    b.act("conv_out_act", Activation::Sigmoid);
    Ok(b.finish(Architecture::Camp1, options.clone(), seed))
}

/// Builds CAMP-II. Kernels 3x3 for the two encoder convs, 2x2 for the two
/// mid-network convs.
pub fn build_camp2<T: Scalar>(seed: u64, options: &ModelOptions) -> Result<ModelGraph<T>> {
    check_size(Architecture::Camp2, options.input_size)?;
    let leaky = Activation::LeakyRelu(options.leaky_alpha);
    let rate = options.dropout_rate;
    let mut b = Builder::new(seed, options.input_size);
    b.conv("conv1", 64, 3);
    b.act("conv1_act", leaky);
    b.pool("pool1");
    b.dropout("drop1", rate);
    b.conv("conv2", 32, 3);
    b.act("conv2_act", leaky);
    b.pool("pool2");
    b.dropout("drop2", rate);
    let s = b.shape.clone();
    b.layer("reshape", LayerKind::Reshape { shape: s }, 0);
    b.batchnorm("bn1");
    b.conv("conv3", 32, 2);
    b.act("conv3_act", leaky);
    b.pool("pool3");
    b.dropout("drop3", rate);
    b.batchnorm("bn2");
    b.conv("conv4", 64, 2);
    b.act("conv4_act", leaky);
    b.shape = vec![b.shape.iter().product()];
    b.layer("flatten", LayerKind::Flatten, 0);
    b.dense("dense1", 64);
    b.act("dense1_act", Activation::Sigmoid);
    b.dense("dense2", 1);
    b.act("dense2_act", Activation::Sigmoid);
    Ok(b.finish(Architecture::Camp2, options.clone(), seed))
}

pub fn build<T: Scalar>(arch: Architecture, seed: u64, options: &ModelOptions) -> Result<ModelGraph<T>> {
    match arch {
        Architecture::Camp1 => build_camp1(seed, options),
        Architecture::Camp2 => build_camp2(seed, options),
    }
}

/// Parameters copied from CAMP-I into CAMP-II.
pub const TRANSFERRED_PARAMS: [&str; 4] = ["conv1.kernel", "conv1.bias", "conv2.kernel", "conv2.bias"];

/// Copies the two encoder convolutions of a CAMP-I model into a CAMP-II
/// model. Nothing else in `target` changes.
pub fn transfer_encoder_weights<T: Scalar>(source: &ModelGraph<T>, target: &mut ModelGraph<T>) -> Result<()> {
    if source.architecture != Architecture::Camp1 {
        return Err(ModelError::WrongArchitecture { expected: Architecture::Camp1, found: source.architecture });
    }
    if target.architecture != Architecture::Camp2 {
        return Err(ModelError::WrongArchitecture { expected: Architecture::Camp2, found: target.architecture });
    }
    // validate everything before mutating
    for name in TRANSFERRED_PARAMS {
        let s = source.param(name).ok_or_else(|| ModelError::UnknownParam(name.into()))?;
        let t = target.param(name).ok_or_else(|| ModelError::UnknownParam(name.into()))?;
        if s.value.shape() != t.value.shape() {
            return Err(ModelError::ParamShape {
                name: name.into(),
                expected: t.value.shape().to_vec(),
                found: s.value.shape().to_vec(),
            });
        }
    }
    for name in TRANSFERRED_PARAMS {
        let value = source.param(name).expect("checked").value.clone();
        target.param_mut(name).expect("checked").value = value;
    }
    Ok(())
}

impl<T: Scalar> ModelGraph<T> {
    /// `camp1-256`, `camp2-64`, ...
    pub fn name(&self) -> String {
        format!("{}-{}", self.architecture, self.options.input_size)
    }

    pub fn input_size(&self) -> usize {
        self.options.input_size
    }

    pub fn param(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor<T>> {
        self.buffers.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn count_parameters(&self) -> ParameterCounts {
        let per_layer: Vec<(String, usize)> = self.layers.iter().map(|l| (l.name.clone(), l.param_count)).collect();
        let total = per_layer.iter().map(|(_, c)| c).sum();
        ParameterCounts { per_layer, total }
    }

    /// Realized (type, output shape, count) of every tabulated layer.
    pub fn realized_table(&self) -> Vec<(String, Vec<usize>, usize)> {
        self.layers
            .iter()
            .filter(|l| l.kind.is_tabulated())
            .map(|l| (l.kind.type_name().to_string(), l.output_shape.clone(), l.param_count))
            .collect()
    }

    fn assert_matches_table(&self) {
        let realized: usize = self.params.iter().map(|p| p.value.len()).sum::<usize>()
            + self.buffers.iter().map(|(_, t)| t.len()).sum::<usize>();
        assert_eq!(realized, self.count_parameters().total, "{}: tensor sizes disagree with layer counts", self.name());
        let declared = declared_table(self.architecture, self.options.input_size);
        let got = self.realized_table();
        assert_eq!(got, declared, "{}: realized layers disagree with the architecture table", self.name());
    }

    /// Forward pass reading parameters from the model.
    pub fn forward(&mut self, tape: &mut Tape<T>, input: Var, rng: &mut impl Rng) -> Result<Forward> {
        let vars: Vec<Var> = self.params.iter().map(|p| tape.param(p.value.clone())).collect();
        self.forward_with(tape, input, &vars, rng)
    }

    /// Forward pass with parameters supplied as tape variables, one per
    /// entry of `self.params` in order. Training mode updates batch-norm
    /// running statistics.
    pub fn forward_with(
        &mut self,
        tape: &mut Tape<T>,
        input: Var,
        params: &[Var],
        rng: &mut impl Rng,
    ) -> Result<Forward> {
        assert_eq!(params.len(), self.params.len(), "one variable per parameter");
        let s = self.options.input_size;
        let xs = tape.shape(input);
        if xs.len() != 4 || xs[1..] != [s, s, 1] {
            return Err(
                TensorError::Shape { op: "forward", detail: format!("expected [N, {s}, {s}, 1], got {xs:?}") }.into()
            );
        }
        let pidx = |name: &str| -> Var {
            let i = self.params.iter().position(|p| p.name == name).expect("parameter built with layer");
            params[i]
        };
        let mode = self.mode;
        let (eps, momentum) = (self.options.bn_epsilon, self.options.bn_momentum);
        let mut x = input;
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut stat_updates = Vec::new();
        for layer in &self.layers {
            let n = &layer.name;
            x = match &layer.kind {
                LayerKind::Input => x,
                LayerKind::Conv { kernel: _, stride, .. } => {
                    tape.conv2d(x, pidx(&format!("{n}.kernel")), pidx(&format!("{n}.bias")), *stride, Padding::Same)?
                }
                LayerKind::ConvTranspose { stride, .. } => {
                    tape.conv2d_transpose(x, pidx(&format!("{n}.kernel")), pidx(&format!("{n}.bias")), *stride)?
                }
                LayerKind::MaxPool { size } => tape.maxpool2d(x, *size)?,
                LayerKind::BatchNorm => {
                    let (g, b) = (pidx(&format!("{n}.gamma")), pidx(&format!("{n}.beta")));
                    match mode {
                        Mode::Train => {
                            let (y, stats) = tape.batchnorm2d_train(x, g, b, eps)?;
                            stat_updates.push((n.clone(), stats));
                            y
                        }
                        Mode::Infer => {
                            let mean = self.buffer(&format!("{n}.running_mean")).expect("built");
                            let var = self.buffer(&format!("{n}.running_var")).expect("built");
                            tape.batchnorm2d_infer(x, g, b, mean.data(), var.data(), eps)?
                        }
                    }
                }
                LayerKind::Dense { .. } => tape.dense(x, pidx(&format!("{n}.kernel")), pidx(&format!("{n}.bias")))?,
                LayerKind::Activation(Activation::LeakyRelu(a)) => tape.leaky_relu(x, *a),
                LayerKind::Activation(Activation::Sigmoid) => tape.sigmoid(x),
                LayerKind::Dropout { rate } => tape.dropout(x, *rate, mode, rng)?,
                LayerKind::Flatten => tape.flatten(x)?,
                LayerKind::Reshape { shape } => {
                    let mut full = vec![tape.shape(x)[0]];
                    full.extend_from_slice(shape);
                    tape.reshape(x, &full)?
                }
            };
            outputs.push((n.clone(), x));
        }
        let m = T::from_f64_lossy(momentum);
        for (name, stats) in stat_updates {
            for (suffix, batch) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
                let key = format!("{name}.{suffix}");
                let buf = &mut self.buffers.iter_mut().find(|(b, _)| *b == key).expect("built").1;
                for (r, &v) in buf.data_mut().iter_mut().zip(batch) {
                    *r = m * *r + (T::one() - m) * v;
                }
            }
        }
        Ok(Forward { output: x, layers: outputs })
    }

    /// Inference-mode prediction on a `[N, s, s, 1]` batch.
    pub fn predict(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let prev = self.mode;
        self.mode = Mode::Infer;
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone());
        let vars: Vec<Var> = self.params.iter().map(|p| tape.constant(p.value.clone())).collect();
        // infer mode never draws from the generator
        let out = self.forward_with(&mut tape, x, &vars, &mut ChaCha8Rng::seed_from_u64(0));
        self.mode = prev;
        Ok(tape.value(out?.output).clone())
    }

    /// Copies gradients of the parameter leaves `vars` (as passed to
    /// [`forward_with`](Self::forward_with)) into `Parameter::grad`.
    pub fn collect_grads(&mut self, tape: &Tape<T>, vars: &[Var]) {
        for (p, v) in self.params.iter_mut().zip(vars) {
            match tape.grad(*v) {
                Some(g) => p.grad = g.clone(),
                None => p.zero_grad(),
            }
        }
    }
}
