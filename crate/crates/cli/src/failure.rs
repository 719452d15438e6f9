//! Error classes and their exit codes.

use std::fmt;
use std::process::ExitCode;

use camp_core::eval::EvalError;
use camp_core::imaging::ImagingError;
use camp_core::models::ModelError;
use camp_core::preprocess::PreprocessError;
use camp_core::synthdata::SynthError;
use camp_core::training::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags or config values.
    Usage,
    /// Missing, unreadable or inconsistent input files.
    Data,
    /// Non-finite loss or gradient, failed gradient check.
    Numerical,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Numerical => 3,
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Error types that embed their source in their own message would
        // otherwise print it twice.
        let mut prev = String::new();
        for (i, e) in self.error.chain().enumerate() {
            let msg = e.to_string();
            if i > 0 && prev.contains(&msg) {
                continue;
            }
            if i > 0 {
                f.write_str(": ")?;
            }
            f.write_str(&msg)?;
            prev = msg;
        }
        Ok(())
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

pub fn usage(msg: impl fmt::Display) -> Failure {
    Failure { kind: Kind::Usage, error: anyhow::anyhow!("{msg}") }
}

pub fn data(msg: impl fmt::Display) -> Failure {
    Failure { kind: Kind::Data, error: anyhow::anyhow!("{msg}") }
}

pub fn numerical(msg: impl fmt::Display) -> Failure {
    Failure { kind: Kind::Numerical, error: anyhow::anyhow!("{msg}") }
}

/// Adds a context line (typically the file involved) to a failure.
pub trait Context<T> {
    fn context(self, ctx: impl fmt::Display) -> Result<T>;
}

impl<T, E: Into<Failure>> Context<T> for std::result::Result<T, E> {
    fn context(self, ctx: impl fmt::Display) -> Result<T> {
        self.map_err(|e| {
            let f: Failure = e.into();
            Failure { kind: f.kind, error: f.error.context(ctx.to_string()) }
        })
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { kind: Kind::Data, error: e.into() }
    }
}

impl From<ImagingError> for Failure {
    fn from(e: ImagingError) -> Self {
        Failure { kind: Kind::Data, error: e.into() }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure { kind: Kind::Data, error: e.into() }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let kind = match e {
            EvalError::Threshold(_) | EvalError::UnknownLayer(_) | EvalError::NotImageLayer { .. } => Kind::Usage,
            _ => Kind::Data,
        };
        Failure { kind, error: e.into() }
    }
}

impl From<PreprocessError> for Failure {
    fn from(e: PreprocessError) -> Self {
        let kind = match e {
            PreprocessError::BadThreshold(_) | PreprocessError::BadRegion(..) => Kind::Usage,
            _ => Kind::Data,
        };
        Failure { kind, error: e.into() }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        let kind = match e {
            SynthError::Spec(_) => Kind::Usage,
            SynthError::Imaging(_) => Kind::Data,
        };
        Failure { kind, error: e.into() }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Config(_)
            | TrainError::ConfigLine { .. }
            | TrainError::Folds { .. }
            | TrainError::SparsityLayer(_) => Kind::Usage,
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient(_) => Kind::Numerical,
            _ => Kind::Data,
        };
        Failure { kind, error: e.into() }
    }
}
