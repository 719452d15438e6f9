//! `camp`: phantom generation, slice preprocessing, two-phase training,
//! prediction, evaluation and diagnostics from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod failure;
mod run_manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Kind;

#[derive(Parser, Debug)]
#[command(
    name = "camp",
    version,
    about = "MRI slice gating, autoencoder pretraining and sparse-regularized classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled phantom dataset.
    Synth(SynthArgs),
    /// Gate slices on entropy and SNR, equalize the survivors.
    Preprocess(PreprocessArgs),
    /// Train the denoising autoencoder (CAMP-I).
    TrainAe(TrainAeArgs),
    /// Train the classifier (CAMP-II) on top of a CAMP-I encoder.
    TrainClf(TrainClfArgs),
    /// Score slices and patients with a trained classifier.
    Predict(PredictArgs),
    /// Confusion-matrix metrics and ROC curve.
    Evaluate(EvaluateArgs),
    /// Write per-channel activation maps of selected layers.
    Activations(ActivationsArgs),
    /// Finite-difference check of every op and both networks.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub patients: usize,
    /// Slices per patient and modality.
    #[arg(long, default_value_t = 4)]
    pub slices: usize,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Falls back to CAMP_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// What separates the two classes: texture or intensity.
    #[arg(long, default_value = "texture")]
    pub rule: String,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file with any of the keys below; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub entropy_threshold: Option<String>,
    #[arg(long)]
    pub snr_threshold: Option<String>,
    /// Noise region as x,y,w,h in pixels of the resized slice.
    #[arg(long)]
    pub background_region: Option<String>,
    #[arg(long)]
    pub target_size: Option<String>,
}

/// One flag per training config key. Values are parsed by the config
/// itself so flags and files accept exactly the same syntax.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// key=value file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    /// Falls back to the config file, then CAMP_SEED, then 0.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub noise_sigma: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    /// Phase-I loss: dice or mse.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub sparsity_p: Option<String>,
    #[arg(long)]
    pub beta_min: Option<String>,
    #[arg(long)]
    pub beta_max: Option<String>,
    #[arg(long)]
    pub sparsity_epsilon: Option<String>,
    #[arg(long)]
    pub sparsity_layer: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_transferred: Option<String>,
    #[arg(long)]
    pub dropout_rate: Option<String>,
    #[arg(long)]
    pub leaky_alpha: Option<String>,
    /// Train one model on all modalities instead of one per modality.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub pooled_modalities: Option<String>,
}

impl TrainFlags {
    pub fn pairs(&self) -> [(&'static str, Option<&String>); 16] {
        [
            ("epochs", self.epochs.as_ref()),
            ("batch_size", self.batch_size.as_ref()),
            ("learning_rate", self.learning_rate.as_ref()),
            ("seed", self.seed.as_ref()),
            ("noise_sigma", self.noise_sigma.as_ref()),
            ("folds", self.folds.as_ref()),
            ("loss", self.loss.as_ref()),
            ("sparsity_p", self.sparsity_p.as_ref()),
            ("beta_min", self.beta_min.as_ref()),
            ("beta_max", self.beta_max.as_ref()),
            ("sparsity_epsilon", self.sparsity_epsilon.as_ref()),
            ("sparsity_layer", self.sparsity_layer.as_ref()),
            ("freeze_transferred", self.freeze_transferred.as_ref()),
            ("dropout_rate", self.dropout_rate.as_ref()),
            ("leaky_alpha", self.leaky_alpha.as_ref()),
            ("pooled_modalities", self.pooled_modalities.as_ref()),
        ]
    }
}

#[derive(Args, Debug)]
pub struct TrainAeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Slices scored for validation RMSE each epoch.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Restrict to one modality.
    #[arg(long)]
    pub modality: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct TrainClfArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// CAMP-I checkpoint, or a train-ae output directory holding one per modality.
    #[arg(long)]
    pub encoder: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    #[arg(long)]
    pub modality: Option<String>,
    /// Also run patient-level k-fold cross-validation (k = folds).
    #[arg(long)]
    pub cv: bool,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Slice,
    Patient,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// CAMP-II checkpoint, or a train-clf output directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// How slice scores combine into a patient score.
    #[arg(long, value_enum, default_value_t = AggregateArg::Mean)]
    pub aggregate: AggregateArg,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// CSV with score and label columns (e.g. predict output).
    #[arg(long, conflicts_with_all = ["model", "manifest"])]
    pub scores: Option<PathBuf>,
    /// Score a manifest with this classifier instead of reading --scores.
    #[arg(long, requires = "manifest")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = camp_core::eval::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// With --model: evaluate slices or aggregated patients.
    #[arg(long, value_enum, default_value_t = Level::Patient)]
    pub level: Level,
    #[arg(long, value_enum, default_value_t = AggregateArg::Mean)]
    pub aggregate: AggregateArg,
}

#[derive(Args, Debug)]
pub struct ActivationsArgs {
    /// CAMP-I or CAMP-II checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Input slice (binary PGM), resized to the model input if needed.
    #[arg(long)]
    pub slice: PathBuf,
    /// Comma-separated layer names.
    #[arg(long, value_delimiter = ',', default_value = "conv1_act,conv2_act")]
    pub layers: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Writes gradcheck.csv and a run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Kind::Usage.exit_code() } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Preprocess(a) => commands::preprocess(&a),
        Command::TrainAe(a) => commands::train_ae(&a),
        Command::TrainClf(a) => commands::train_clf(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Activations(a) => commands::activations(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.kind.exit_code()
        }
    }
}
