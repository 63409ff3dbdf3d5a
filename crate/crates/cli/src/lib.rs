//! Experiment orchestration behind the `orthodepth` binary.

pub mod commands;
pub mod config;
mod output;

use std::path::PathBuf;

use orthodepth_core::codec::CodecError;
use orthodepth_core::corpus::CorpusError;
use orthodepth_core::evaluator::EvalError;
use orthodepth_core::model::{CheckpointError, ModelError};
use orthodepth_core::trainer::TrainError;
use thiserror::Error;

pub use config::{ExperimentConfig, Preset};
pub use output::{Layout, Manifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// 0 success, 1 usage or config, 2 data, 3 divergence, 4 failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Write { .. } => 2,
            CliError::Divergence(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
            TrainError::Config(_) | TrainError::NotEnoughSamples { .. } => CliError::Config(e.to_string()),
            TrainError::Model(ModelError::Config(_)) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(e) => e.into(),
            EvalError::Corpus(e) => e.into(),
            EvalError::Model(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}
