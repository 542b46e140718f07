//! HTTP+JSON annotation service over an [`AnnotationStore`].
//!
//! Every write goes through one mutex, so commits are serialized; handlers
//! never hold the lock across an await point.

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use saleval::annotation::{write_export, AnnotationStore, NextTask, QualityRule};
use saleval::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Header carrying the admin token on `/api/admin/*` requests.
pub const ADMIN_HEADER: &str = "x-admin-token";

pub struct AppState {
    store: Mutex<AnnotationStore>,
    admin_token: String,
    quality: QualityRule,
    clock: Box<dyn Fn() -> u64 + Send + Sync>,
}

impl AppState {
    pub fn new(
        store: AnnotationStore,
        admin_token: impl Into<String>,
        quality: QualityRule,
    ) -> Self {
        Self {
            store: Mutex::new(store),
            admin_token: admin_token.into(),
            quality,
            clock: Box::new(wall_clock_ms),
        }
    }

    /// Replaces the wall clock (tests use a fixed or stepped clock).
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    fn store(&self) -> MutexGuard<'_, AnnotationStore> {
        // A panic inside a handler cannot leave the store half-written: every
        // mutation is a single committed event.
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn now(&self) -> u64 {
        (self.clock)()
    }
}

fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(open_session))
        .route("/api/sessions/{id}/next", get(next_task))
        .route("/api/annotations", post(submit))
        .route("/api/admin/progress", get(progress))
        .route("/api/admin/export", get(export))
        .route("/api/admin/filter", post(filter))
        .with_state(state)
}

/// Error response: `{"error": message}` with a status derived from the kind.
pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Refused(_) => StatusCode::CONFLICT,
            Error::InvalidArgument(_) | Error::Data(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn require_admin(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    match headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok()) {
        Some(t) if t == state.admin_token => Ok(()),
        _ => Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "admin token required".into(),
        )),
    }
}

#[derive(Debug, Deserialize)]
pub struct OpenSessionRequest {
    pub worker_token: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct OpenSessionResponse {
    pub session_id: String,
    pub batch_size: usize,
}

async fn open_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<OpenSessionRequest>,
) -> ApiResult<Json<OpenSessionResponse>> {
    if req.worker_token.trim().is_empty() {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "worker_token must not be empty".into(),
        ));
    }
    let now = state.now();
    let mut store = state.store();
    let session = store.open_session(&req.worker_token, now)?;
    let batch_size = store.batch_size(&session.session_id)?;
    Ok(Json(OpenSessionResponse {
        session_id: session.session_id,
        batch_size,
    }))
}

async fn next_task(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<NextTask>> {
    Ok(Json(state.store().next_task(&id)?))
}

#[derive(Debug, Deserialize)]
pub struct SubmitRequest {
    pub session_id: String,
    pub task_id: String,
    pub label: usize,
    pub elapsed_ms: u64,
}

async fn submit(
    State(state): State<Arc<AppState>>,
    Json(req): Json<SubmitRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    let now = state.now();
    state.store().submit(
        &req.session_id,
        &req.task_id,
        req.label,
        req.elapsed_ms,
        now,
    )?;
    Ok(Json(json!({ "ok": true })))
}

async fn progress(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    require_admin(&state, &headers)?;
    Ok(Json(state.store().progress()).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub accepted_only: bool,
}

async fn export(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    require_admin(&state, &headers)?;
    let records = state.store().export(q.accepted_only);
    let mut body = Vec::new();
    write_export(&mut body, &records)?;
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from(body),
    )
        .into_response())
}

async fn filter(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    require_admin(&state, &headers)?;
    let now = state.now();
    let report = state.store().filter_sessions(&state.quality, now)?;
    Ok(Json(report).into_response())
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
