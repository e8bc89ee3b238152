use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;
use uuid::Uuid;

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Validation(String),

    #[error("unknown session {0}")]
    NotFound(Uuid),

    #[error("{0}")]
    Conflict(String),

    /// The caller's `expected_seq` is stale.
    #[error("sequence conflict: expected {expected}, current {current}")]
    StaleSeq { expected: u64, current: u64 },

    /// The on-disk log cannot be replayed.
    #[error("corrupt event log: {0}")]
    Corrupt(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(curtail_core::Error),
}

impl From<curtail_core::Error> for ServiceError {
    fn from(e: curtail_core::Error) -> Self {
        match e {
            e if e.is_user_error() => ServiceError::Validation(e.to_string()),
            curtail_core::Error::SearchExhausted(msg) => ServiceError::Validation(format!("no design found: {msg}")),
            e => ServiceError::Core(e),
        }
    }
}

impl ServiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ServiceError::Io { path: path.into(), source }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) | ServiceError::StaleSeq { .. } => StatusCode::CONFLICT,
            ServiceError::Corrupt(_) | ServiceError::Io { .. } | ServiceError::Bind { .. } | ServiceError::Core(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let mut body = serde_json::json!({ "error": self.to_string() });
        if let ServiceError::StaleSeq { current, .. } = self {
            body["current_seq"] = current.into();
        }
        (status, Json(body)).into_response()
    }
}
