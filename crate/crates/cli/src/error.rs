use std::process::ExitCode;

use hps_core::HpsError;

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Input(_) => 1,
            Self::NonConvergence(_) => 2,
            Self::Verification(_) => 3,
        })
    }
}

impl From<HpsError> for CliError {
    fn from(e: HpsError) -> Self {
        match e {
            HpsError::Singular { .. } | HpsError::NotHurwitz { .. } => Self::Verification(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Input(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Input(format!("json: {e}"))
    }
}
