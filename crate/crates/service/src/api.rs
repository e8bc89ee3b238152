//! HTTP/JSON routes.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use curtail_core::{Hypotheses, MonitorUpdate, StageDecision};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;
use uuid::Uuid;

use crate::error::{ServiceError, ServiceResult};
use crate::session::TrialSession;
use crate::store::{IndexEntry, SessionStore};

pub type AppState = Arc<SessionStore>;

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/outcomes", post(record_outcome))
        .route("/sessions/{id}/outcomes/last", delete(undo_outcome))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/boundaries", get(boundaries))
        .layer(TraceLayer::new_for_http())
        .layer(CorsLayer::permissive())
        .with_state(store)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: TrialSession,
    pub current: MonitorUpdate,
    pub message: String,
}

impl SessionView {
    fn of(session: &TrialSession) -> Self {
        let current = session.update();
        SessionView { session: session.clone(), message: current.message(), current }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OutcomeResponse {
    pub decision: StageDecision,
    pub message: String,
    pub session: SessionView,
}

#[derive(Debug, Deserialize)]
pub struct OutcomeRequest {
    pub responder: bool,
    pub expected_seq: u64,
}

#[derive(Debug, Default, Deserialize)]
pub struct SeqQuery {
    pub expected_seq: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub k: u32,
    pub efficacy: u32,
    /// `None` where futility stopping is not yet possible.
    pub futility: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundaryTable {
    pub u: u32,
    #[serde(rename = "K")]
    pub max_n: u32,
    pub rows: Vec<BoundaryRow>,
}

impl BoundaryTable {
    pub fn of(design: &curtail_core::Design) -> Self {
        let rows = (1..=design.max_n())
            .map(|k| BoundaryRow { k, efficacy: design.u(), futility: u32::try_from(design.futility_bound(k)).ok() })
            .collect();
        BoundaryTable { u: design.u(), max_n: design.max_n(), rows }
    }
}

fn parse_id(raw: &str) -> ServiceResult<Uuid> {
    raw.parse().map_err(|_| ServiceError::Validation(format!("malformed session id {raw:?}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f).await.expect("store task panicked")
}

async fn create_session(
    State(store): State<AppState>,
    body: Result<Json<Hypotheses>, axum::extract::rejection::JsonRejection>,
) -> ServiceResult<(StatusCode, Json<SessionView>)> {
    let Json(hyp) = body.map_err(|e| ServiceError::Validation(e.body_text()))?;
    let session = blocking(move || store.create(hyp)).await?;
    Ok((StatusCode::CREATED, Json(SessionView::of(&session))))
}

async fn list_sessions(State(store): State<AppState>) -> Json<Vec<IndexEntry>> {
    Json(store.list().iter().map(|s| IndexEntry::of(s)).collect())
}

async fn get_session(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SessionView>> {
    let session = store.get(parse_id(&id)?)?;
    Ok(Json(SessionView::of(&session)))
}

async fn record_outcome(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<OutcomeRequest>, axum::extract::rejection::JsonRejection>,
) -> ServiceResult<Json<OutcomeResponse>> {
    let id = parse_id(&id)?;
    let Json(req) = body.map_err(|e| ServiceError::Validation(e.body_text()))?;
    let (update, session) = blocking(move || store.record(id, req.responder, req.expected_seq)).await?;
    Ok(Json(OutcomeResponse {
        decision: update.decision,
        message: update.message(),
        session: SessionView::of(&session),
    }))
}

async fn undo_outcome(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SeqQuery>,
) -> ServiceResult<Json<SessionView>> {
    let id = parse_id(&id)?;
    let session = blocking(move || store.undo(id, q.expected_seq)).await?;
    Ok(Json(SessionView::of(&session)))
}

async fn finalize(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SeqQuery>,
) -> ServiceResult<Json<SessionView>> {
    let id = parse_id(&id)?;
    let session = blocking(move || store.finalize(id, q.expected_seq)).await?;
    Ok(Json(SessionView::of(&session)))
}

async fn boundaries(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<BoundaryTable>> {
    let session = store.get(parse_id(&id)?)?;
    Ok(Json(BoundaryTable::of(&session.design)))
}
