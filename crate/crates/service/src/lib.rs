//! Live trial monitoring over HTTP.
//!
//! Each session wraps one searched design and records patient outcomes one at
//! a time. State is event-sourced: see [`session`] for the transition function
//! and [`store`] for the on-disk log.

pub mod api;
pub mod config;
pub mod error;
pub mod session;
pub mod store;

use std::sync::Arc;

pub use api::router;
pub use config::Config;
pub use error::{ServiceError, ServiceResult};
pub use session::{EventRecord, SessionEvent, SessionStatus, TrialSession};
pub use store::SessionStore;
pub use uuid::Uuid;

/// Opens the data directory and serves until ctrl-c.
pub async fn serve(config: Config) -> ServiceResult<()> {
    let store = Arc::new(SessionStore::open(&config.data_dir)?);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.listen, source })?;
    tracing::info!(addr = %config.listen, data_dir = %config.data_dir.display(), "listening");
    let app = router(store.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::io(&config.data_dir, e))?;
    store.write_index()
}
