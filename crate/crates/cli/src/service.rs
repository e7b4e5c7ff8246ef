//! HTTP API for the human-baseline runner. Everything lives under `/api/`;
//! the static UI, when given, is served at `/`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cogbench_core::ScoreTable;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::{ServeDir, ServeFile};

use crate::session::{Ack, Created, SessionError, Store, TrialView};

impl SessionError {
    pub fn status(&self) -> StatusCode {
        match self {
            SessionError::UnknownSession(_) | SessionError::UnknownDataset(_) | SessionError::UnknownTrial(_) => {
                StatusCode::NOT_FOUND
            }
            SessionError::SessionComplete | SessionError::SessionActive | SessionError::StaleTrial { .. } => {
                StatusCode::CONFLICT
            }
            SessionError::InvalidAnswer(_) | SessionError::BadRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::NoData => StatusCode::NOT_FOUND,
            SessionError::Dataset(_) | SessionError::Io { .. } | SessionError::Corrupt { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::SessionComplete => "session_complete",
            SessionError::SessionActive => "session_active",
            SessionError::StaleTrial { .. } => "stale_trial",
            SessionError::InvalidAnswer(_) => "invalid_answer",
            SessionError::UnknownDataset(_) => "unknown_dataset",
            SessionError::UnknownTrial(_) => "unknown_trial",
            SessionError::BadRequest(_) => "bad_request",
            SessionError::NoData => "no_data",
            SessionError::Dataset(_) | SessionError::Io { .. } | SessionError::Corrupt { .. } => "internal",
        }
    }
}

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewSession {
    #[serde(default)]
    pub subject: String,
    pub dataset: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerIn {
    pub trial_ref: String,
    pub answer: String,
    #[serde(default)]
    pub rt_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `group` or `task`.
    pub section: String,
    pub label: String,
    pub n: usize,
    pub accuracy_pct: f64,
    pub se_pct: f64,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub session_id: String,
    pub answered: usize,
    pub rows: Vec<ReportRow>,
}

pub fn report_rows(t: &ScoreTable) -> Vec<ReportRow> {
    let section = |name: &str, cells: &[cogbench_core::ScoreCell]| {
        cells
            .iter()
            .map(|c| ReportRow {
                section: name.to_string(),
                label: c.label.clone(),
                n: c.n,
                accuracy_pct: c.percent(),
                se_pct: c.se_percent(),
                display: c.display(),
            })
            .collect::<Vec<_>>()
    };
    let mut rows = section("group", &t.groups);
    rows.extend(section("task", &t.tasks));
    rows
}

type Shared = Arc<Store>;

/// Store calls touch disk (and fsync), so they run off the async workers.
async fn blocking<R: Send + 'static>(
    store: Shared,
    f: impl FnOnce(&Store) -> Result<R, SessionError> + Send + 'static,
) -> Result<R, SessionError> {
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .unwrap_or_else(|e| Err(SessionError::BadRequest(format!("worker failed: {e}"))))
}

async fn create(State(s): State<Shared>, Json(req): Json<NewSession>) -> Result<(StatusCode, Json<Created>), SessionError> {
    let created = blocking(s, move |st| st.create(&req.subject, &req.dataset, req.seed)).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn next(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<TrialView>, SessionError> {
    blocking(s, move |st| st.next(&id)).await.map(Json)
}

async fn answer(State(s): State<Shared>, Path(id): Path<String>, Json(a): Json<AnswerIn>) -> Result<Json<Ack>, SessionError> {
    blocking(s, move |st| st.submit(&id, &a.trial_ref, &a.answer, a.rt_ms)).await.map(Json)
}

async fn report(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<Report>, SessionError> {
    blocking(s, move |st| {
        let table = st.report(&id)?;
        let answered = table.tasks.iter().map(|c| c.n).sum();
        Ok(Report { session_id: id, answered, rows: report_rows(&table) })
    })
    .await
    .map(Json)
}

async fn frame(State(s): State<Shared>, Path((trial, i)): Path<(String, usize)>) -> Result<Response, SessionError> {
    let png = blocking(s, move |st| st.frame(&trial, i)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "max-age=3600")], png).into_response())
}

async fn api_not_found() -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": "not_found", "message": "no such route" }))).into_response()
}

/// The API router, plus the UI directory at `/` when given.
pub fn router(store: Arc<Store>, ui: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/report", get(report))
        .route("/frames/{trial}/{i}", get(frame))
        .fallback(api_not_found)
        .with_state(store);
    let app = Router::new().nest("/api", api);
    match ui {
        Some(dir) => {
            let index = dir.join("index.html");
            app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => app,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(store: Arc<Store>, addr: &str, ui: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui)).await
}
