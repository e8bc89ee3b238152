use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or inputs; exit status 2.
    #[error("{0}")]
    Usage(String),

    /// Anything else; exit status 1.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(1),
        }
    }
}

impl From<curtail_core::Error> for CliError {
    fn from(e: curtail_core::Error) -> Self {
        if e.is_user_error() || matches!(e, curtail_core::Error::SearchExhausted(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<curtail_service::ServiceError> for CliError {
    fn from(e: curtail_service::ServiceError) -> Self {
        match e.status().is_client_error() {
            true => CliError::Usage(e.to_string()),
            false => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
