use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Hypotheses or other user-facing inputs failed validation.
    #[error("{0}")]
    Validation(String),

    #[error("outcome (m={m}, s={s}) is not in the terminal support")]
    NotInSupport { m: u32, s: u32 },

    #[error("outcomes belong to different designs")]
    MixedDesign,

    #[error("no design found: {0}")]
    SearchExhausted(String),

    #[error("enumeration limited to K <= {limit}, got K = {k}")]
    SizeLimit { k: u32, limit: u32 },

    #[error("nothing to emit: result set is empty")]
    EmptyRows,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by caller input rather than internal failure.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Validation(_)
                | Error::NotInSupport { .. }
                | Error::MixedDesign
                | Error::SizeLimit { .. }
                | Error::EmptyRows
        )
    }
}
