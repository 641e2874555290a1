use std::path::PathBuf;

use graphcoco::cocoloss::LossError;
use graphcoco::encoder::CheckpointError;
use graphcoco::eval::EvalError;
use graphcoco::graphdata::GraphError;
use graphcoco::trainer::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// 2 for configuration, 3 for data and I/O, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Train(e) if e.is_numeric() => 4,
            CliError::Train(
                TrainError::Config(_) | TrainError::Augment(_) | TrainError::Loss(LossError::Delta(_) | LossError::Tau(_)),
            ) => 2,
            CliError::Eval(EvalError::NonFinite) => 4,
            _ => 3,
        }
    }
}
