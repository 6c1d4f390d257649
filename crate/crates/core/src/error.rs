use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel {kernel}: {reasons:?}")]
    InvalidKernel { kernel: String, reasons: Vec<String> },

    #[error("config does not match design space of {kernel}: {reason}")]
    ConfigMismatch { kernel: String, reason: String },

    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("sequence of length {len} exceeds max sequence length {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("llm transport failure after {attempts} attempts: {message}")]
    LlmTransport { attempts: usize, message: String },

    #[error("malformed config: {0}")]
    Config(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("dataset validation failed with {} problem(s)", .0.len())]
    Dataset(Vec<String>),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable kind, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidKernel { .. } => "invalid_kernel",
            Error::ConfigMismatch { .. } => "config_mismatch",
            Error::InfeasibleSpec(_) => "infeasible_spec",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Empty(_) => "empty_input",
            Error::SequenceTooLong { .. } => "sequence_too_long",
            Error::Divergence { .. } => "divergence",
            Error::LlmTransport { .. } => "llm_transport",
            Error::Config(_) => "malformed_config",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Dataset(_) => "dataset_invalid",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingArtifact(_) => 3,
            _ => 1,
        }
    }
}
