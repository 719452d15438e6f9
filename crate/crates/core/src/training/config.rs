use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{Result, TrainError};
use crate::losses::SparsityConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconLoss {
    Dice,
    Mse,
}

impl ReconLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            ReconLoss::Dice => "dice",
            ReconLoss::Mse => "mse",
        }
    }
}

impl FromStr for ReconLoss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dice" => Ok(ReconLoss::Dice),
            "mse" => Ok(ReconLoss::Mse),
            _ => Err(format!("expected dice or mse, got {s:?}")),
        }
    }
}

/// Every knob of both training phases. Defaults are the values used when
/// a key is absent from the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Std of the Gaussian corruption added to autoencoder inputs.
    pub noise_sigma: f64,
    pub folds: usize,
    pub loss: ReconLoss,
    pub sparsity: SparsityConfig,
    /// Layer whose activations feed the sparse regularizer.
    pub sparsity_layer: String,
    /// Keep the transferred encoder weights fixed during phase II.
    pub freeze_transferred: bool,
    pub dropout_rate: f64,
    pub leaky_alpha: f64,
    /// Train one model on all modalities instead of one per modality.
    pub pooled_modalities: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
            noise_sigma: 0.05,
            folds: 10,
            loss: ReconLoss::Dice,
            sparsity: SparsityConfig::default(),
            sparsity_layer: "dense1_act".into(),
            freeze_transferred: false,
            dropout_rate: 0.25,
            leaky_alpha: 0.01,
            pooled_modalities: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "learning_rate",
    "seed",
    "noise_sigma",
    "folds",
    "loss",
    "sparsity_p",
    "beta_min",
    "beta_max",
    "sparsity_epsilon",
    "sparsity_layer",
    "freeze_transferred",
    "dropout_rate",
    "leaky_alpha",
    "pooled_modalities",
];

fn parse<V: FromStr>(key: &str, value: &str) -> std::result::Result<V, String>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 || self.batch_size == 0 || self.folds == 0 {
            return bad("epochs, batch_size and folds must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if !(self.leaky_alpha >= 0.0 && self.leaky_alpha.is_finite()) {
            return bad("leaky_alpha must be non-negative");
        }
        self.sparsity.validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "noise_sigma" => self.noise_sigma = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "loss" => self.loss = v.parse()?,
            "sparsity_p" => self.sparsity.p = parse(key, v)?,
            "beta_min" => self.sparsity.beta_min = parse(key, v)?,
            "beta_max" => self.sparsity.beta_max = parse(key, v)?,
            "sparsity_epsilon" => self.sparsity.epsilon = parse(key, v)?,
            "sparsity_layer" => self.sparsity_layer = v.to_string(),
            "freeze_transferred" => self.freeze_transferred = parse(key, v)?,
            "dropout_rate" => self.dropout_rate = parse(key, v)?,
            "leaky_alpha" => self.leaky_alpha = parse(key, v)?,
            "pooled_modalities" => self.pooled_modalities = parse(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| TrainError::ConfigLine { line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            cfg.set(k.trim(), v).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io { path: path.into(), source })?;
        Self::parse_str(&text).map_err(|e| match e {
            TrainError::ConfigLine { line, message } => {
                TrainError::Config(format!("{}:{line}: {message}", path.display()))
            }
            other => other,
        })
    }

    /// Every key with its value, in [`CONFIG_KEYS`] order; parses back to
    /// an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("seed", self.seed.to_string()),
            ("noise_sigma", format!("{:?}", self.noise_sigma)),
            ("folds", self.folds.to_string()),
            ("loss", self.loss.as_str().to_string()),
            ("sparsity_p", format!("{:?}", self.sparsity.p)),
            ("beta_min", format!("{:?}", self.sparsity.beta_min)),
            ("beta_max", format!("{:?}", self.sparsity.beta_max)),
            ("sparsity_epsilon", format!("{:?}", self.sparsity.epsilon)),
            ("sparsity_layer", self.sparsity_layer.clone()),
            ("freeze_transferred", self.freeze_transferred.to_string()),
            ("dropout_rate", format!("{:?}", self.dropout_rate)),
            ("leaky_alpha", format!("{:?}", self.leaky_alpha)),
            ("pooled_modalities", self.pooled_modalities.to_string()),
        ]
    }
}
