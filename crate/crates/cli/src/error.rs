use std::path::PathBuf;

use lbp_core::{BoundaryError, CtreeError, ExactError, LbpError, ModelError, SweepError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("file error: {path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("enumeration cap exceeded: {0}")]
    Exact(ExactError),
    #[error("{0}")]
    Lbp(LbpError),
    #[error("{0}")]
    Ctree(CtreeError),
    #[error("{0}")]
    Boundary(#[from] BoundaryError),
    #[error("equivalence check failed: gap {gap:e} exceeds {tolerance:e}")]
    CheckFailed { gap: f64, tolerance: f64 },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// 0 success, 1 usage, 2 input error, 3 numerical or engine failure,
    /// 4 cap exceeded.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::File { .. }
            | CliError::Parse { .. }
            | CliError::Model(_)
            | CliError::UnknownNode(_)
            | CliError::Output(_) => 2,
            CliError::Exact(ExactError::TooLarge { .. }) => 4,
            CliError::Exact(_) => 2,
            CliError::Lbp(
                LbpError::MalformedMessage { .. } | LbpError::WrongMessageCount { .. },
            ) => 2,
            CliError::Lbp(LbpError::InvalidOptions(_)) => 1,
            CliError::Lbp(_) => 3,
            CliError::Ctree(
                CtreeError::TooLarge { .. } | CtreeError::TooManyConfigurations { .. },
            ) => 4,
            CliError::Ctree(CtreeError::UnknownRoot(_) | CtreeError::ZeroInitialMessage(_)) => 2,
            CliError::Ctree(CtreeError::Lbp(e)) => CliError::Lbp(e.clone()).exit_code(),
            CliError::Ctree(_) => 3,
            CliError::Boundary(_) | CliError::CheckFailed { .. } => 3,
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::Model(m) => CliError::Model(m),
            other => CliError::Exact(other),
        }
    }
}

impl From<LbpError> for CliError {
    fn from(e: LbpError) -> Self {
        CliError::Lbp(e)
    }
}

impl From<CtreeError> for CliError {
    fn from(e: CtreeError) -> Self {
        CliError::Ctree(e)
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            e @ SweepError::InvalidParameters(_) => CliError::Usage(e.to_string()),
            SweepError::Lbp(e) => CliError::Lbp(e),
        }
    }
}
