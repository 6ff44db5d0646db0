use std::path::PathBuf;

use syncnet_core::protocols::ProtocolError;
use syncnet_core::sim::{SimError, Structural};
use syncnet_core::synthesis::SynthesisError;
use syncnet_core::verify::VerifyError;

use crate::formats::FormatError;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("synthesis failed: {0}")]
    Synthesis(#[from] SynthesisError),
    #[error("structural refusal: {0}")]
    Structural(Structural),
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 0 success, 1 usage, 2 synthesis, 3 structural, 4 internal.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Synthesis(_) => 2,
            CliError::Structural(_) => 3,
            CliError::Internal(_) | CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Synthesis(s) => CliError::Synthesis(s),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Structural(s) => CliError::Structural(s),
            SimError::Protocol(p) => p.into(),
            SimError::Config(_) | SimError::Dimension { .. } | SimError::Graph(_) => CliError::Usage(e.to_string()),
            SimError::Diverged { .. } | SimError::SignalMismatch(_) | SimError::EmptyTrace => {
                CliError::Internal(e.to_string())
            }
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Refused(s) => CliError::Structural(s),
            VerifyError::Sim(s) => s.into(),
            VerifyError::Linalg(l) => CliError::Internal(l.to_string()),
        }
    }
}
