//! HTTP API for reviewing predicted and missing codes.
//!
//! All routes live under `/api/v1`. Sessions are written to disk after every
//! change so that later pipeline stages can read them.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use codeaudit_core::annotation::{
    agreement, create_session, failing_codes, load_sessions, Dataset, Mark, SessionRequest, TaskContext,
    ValidationSession, ValidationTask, DEFAULT_EXCLUDE_THRESHOLD, DEFAULT_PER_CODE_CAP,
};
use codeaudit_core::ner::EntitySpan;
use codeaudit_core::pipeline::ReviewInputs;
use codeaudit_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

type Shared = Arc<Mutex<ValidationSession>>;

pub struct AppState {
    inputs: ReviewInputs,
    sessions: RwLock<BTreeMap<String, Shared>>,
    sessions_dir: Option<PathBuf>,
    next_id: AtomicU64,
}

impl AppState {
    /// State over `inputs`. Sessions found in `sessions_dir` are resumed.
    pub fn new(inputs: ReviewInputs, sessions_dir: Option<PathBuf>) -> codeaudit_core::Result<Self> {
        let existing = match &sessions_dir {
            Some(dir) => load_sessions(dir)?,
            None => Vec::new(),
        };
        let next = existing.len() as u64 + 1;
        let sessions = existing
            .into_iter()
            .map(|s| (s.session_id.clone(), Arc::new(Mutex::new(s))))
            .collect();
        Ok(AppState {
            inputs,
            sessions: RwLock::new(sessions),
            sessions_dir,
            next_id: AtomicU64::new(next),
        })
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()).into())
    }

    fn persist(&self, session: &ValidationSession) -> Result<(), ApiError> {
        if let Some(dir) = &self.sessions_dir {
            session.save(dir)?;
        }
        Ok(())
    }

    fn fresh_id(&self) -> String {
        let sessions = self.sessions.read().expect("session map lock");
        loop {
            let id = format!("s{:04}", self.next_id.fetch_add(1, Ordering::SeqCst));
            if !sessions.contains_key(&id) {
                return id;
            }
        }
    }

    /// Snapshot of all finalized sessions, ordered by id.
    fn finalized(&self) -> Vec<ValidationSession> {
        let shared: Vec<Shared> = self.sessions.read().expect("session map lock").values().cloned().collect();
        shared
            .iter()
            .map(|s| s.lock().expect("session lock").clone())
            .filter(|s| s.finalized)
            .collect()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        use codeaudit_core::stats::StatsError;
        let (status, code) = match &e {
            Error::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            Error::UnknownTask { .. } => (StatusCode::NOT_FOUND, "unknown_task"),
            Error::SessionFinalized(_) => (StatusCode::CONFLICT, "session_finalized"),
            Error::SessionOpen(_) => (StatusCode::CONFLICT, "session_open"),
            Error::DisjointSessions(..) => (StatusCode::UNPROCESSABLE_ENTITY, "disjoint_sessions"),
            Error::InvalidSpan { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_span"),
            Error::UnknownConcept(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_concept"),
            Error::Stats(StatsError::KappaUndefined) => (StatusCode::UNPROCESSABLE_ENTITY, "kappa_undefined"),
            Error::Stats(_) => (StatusCode::UNPROCESSABLE_ENTITY, "statistic_undefined"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
struct CreateSession {
    dataset: String,
    per_code_cap: Option<usize>,
    seed: Option<u64>,
    annotator_id: Option<String>,
}

async fn create(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ValidationSession>)> {
    let Json(body) = body?;
    let dataset = Dataset::parse(&body.dataset).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_dataset",
            format!("unknown dataset {:?}; expected P_A, P_NA or A_NP-review", body.dataset),
        )
    })?;
    let annotator_id = headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(body.annotator_id)
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_annotator", "annotator id is required"))?;
    let request = SessionRequest {
        session_id: state.fresh_id(),
        annotator_id,
        dataset,
        per_code_cap: body.per_code_cap.unwrap_or(DEFAULT_PER_CODE_CAP),
        seed: body.seed.unwrap_or(42),
    };
    let ctx = TaskContext {
        documents: &state.inputs.documents,
        code_concepts: &state.inputs.code_concepts,
    };
    let session = create_session(request, &state.inputs.records, ctx);
    state.persist(&session)?;
    state
        .sessions
        .write()
        .expect("session map lock")
        .insert(session.session_id.clone(), Arc::new(Mutex::new(session.clone())));
    Ok((StatusCode::CREATED, Json(session)))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let shared: Vec<Shared> = state.sessions.read().expect("session map lock").values().cloned().collect();
    let rows: Vec<_> = shared
        .iter()
        .map(|s| {
            let s = s.lock().expect("session lock");
            json!({
                "session_id": s.session_id,
                "annotator_id": s.annotator_id,
                "dataset": s.dataset,
                "tasks": s.tasks.len(),
                "marked": s.marks.len(),
                "finalized": s.finalized,
            })
        })
        .collect();
    Json(json!(rows))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ValidationSession>> {
    let session = state.session(&id)?;
    let snapshot = session.lock().expect("session lock").clone();
    Ok(Json(snapshot))
}

async fn tasks(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Vec<ValidationTask>>> {
    let session = state.session(&id)?;
    let tasks = session.lock().expect("session lock").tasks.clone();
    Ok(Json(tasks))
}

#[derive(Debug, Deserialize)]
struct MarkBody {
    task_id: String,
    mark: Mark,
}

#[derive(Debug, Serialize)]
struct Ack {
    ok: bool,
    session_id: String,
}

async fn mark(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<MarkBody>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(body) = body?;
    let session = state.session(&id)?;
    let mut s = session.lock().expect("session lock");
    s.submit_mark(&body.task_id, body.mark)?;
    state.persist(&s)?;
    Ok(Json(json!({
        "ok": true,
        "session_id": id,
        "task_id": body.task_id,
        "mark": body.mark,
        "marked": s.marks.len(),
        "percent_correct": s.percent_correct(),
    })))
}

#[derive(Debug, Deserialize)]
struct SpanBody {
    admission_id: String,
    start: usize,
    end: usize,
}

#[derive(Debug, Deserialize)]
struct AnnotationBody {
    span: SpanBody,
    concept_id: String,
    correct: bool,
}

async fn annotate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<AnnotationBody>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(body) = body?;
    if state.inputs.dictionary.concept(&body.concept_id).is_none() {
        return Err(Error::UnknownConcept(body.concept_id).into());
    }
    let session = state.session(&id)?;
    let document = state.inputs.documents.get(&body.span.admission_id).map_or("", String::as_str);
    let mut s = session.lock().expect("session lock");
    let example = s
        .add_annotation(
            &body.span.admission_id,
            document,
            body.span.start,
            body.span.end,
            &body.concept_id,
            body.correct,
        )?
        .clone();
    state.persist(&s)?;
    Ok(Json(json!({ "ok": true, "session_id": id, "annotation": example })))
}

async fn finalize(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Ack>> {
    let session = state.session(&id)?;
    let mut s = session.lock().expect("session lock");
    s.finalize()?;
    state.persist(&s)?;
    Ok(Json(Ack { ok: true, session_id: id }))
}

#[derive(Debug, Deserialize)]
struct AgreementQuery {
    a: String,
    b: String,
}

async fn agreement_route(
    State(state): State<Arc<AppState>>,
    query: Result<Query<AgreementQuery>, QueryRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Query(q) = query?;
    let a = state.session(&q.a)?.lock().expect("session lock").clone();
    let b = state.session(&q.b)?.lock().expect("session lock").clone();
    let result = agreement(&a, &b)?;
    Ok(Json(json!({
        "a": q.a,
        "b": q.b,
        "kappa": result.kappa,
        "jointly_marked": result.jointly_marked,
        "percent_correct_a": result.percent_correct_a,
        "percent_correct_b": result.percent_correct_b,
    })))
}

#[derive(Debug, Deserialize)]
struct FailingQuery {
    threshold: Option<f64>,
}

async fn failing(
    State(state): State<Arc<AppState>>,
    query: Result<Query<FailingQuery>, QueryRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Query(q) = query?;
    let threshold = q.threshold.unwrap_or(DEFAULT_EXCLUDE_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_threshold",
            format!("threshold must be in [0, 1], got {threshold}"),
        ));
    }
    let validation = failing_codes(&state.finalized(), threshold)?;
    Ok(Json(json!({
        "threshold": threshold,
        "failing": validation.failing,
        "unvalidated": validation.unvalidated,
        "passing": validation.passing,
    })))
}

#[derive(Debug, Serialize)]
struct DocumentView<'a> {
    admission_id: &'a str,
    excerpt: &'a str,
    spans: &'a [EntitySpan],
}

async fn document(State(state): State<Arc<AppState>>, Path(admission_id): Path<String>) -> ApiResult<Response> {
    let excerpt = state.inputs.documents.get(&admission_id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_document",
            format!("no discharge-diagnosis section for admission {admission_id:?}"),
        )
    })?;
    let spans = state.inputs.predictions.get(&admission_id).map_or(&[][..], Vec::as_slice);
    Ok(Json(DocumentView {
        admission_id: &admission_id,
        excerpt,
        spans,
    })
    .into_response())
}

#[derive(Debug, Deserialize)]
struct ConceptQuery {
    q: Option<String>,
    limit: Option<usize>,
}

/// Concepts whose preferred name or code contains the query.
async fn concepts(State(state): State<Arc<AppState>>, Query(q): Query<ConceptQuery>) -> Json<serde_json::Value> {
    let needle = q.q.unwrap_or_default().to_lowercase();
    let limit = q.limit.unwrap_or(20);
    let hits: Vec<_> = state
        .inputs
        .dictionary
        .concepts()
        .filter(|c| {
            c.preferred_name.to_lowercase().contains(&needle)
                || c.codes.iter().any(|code| code.canonical().to_lowercase().contains(&needle))
        })
        .take(limit)
        .map(|c| json!({ "concept_id": c.concept_id, "name": c.preferred_name, "codes": c.codes }))
        .collect();
    Json(json!(hits))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/tasks", get(tasks))
        .route("/sessions/{id}/marks", post(mark))
        .route("/sessions/{id}/annotations", post(annotate))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/agreement", get(agreement_route))
        .route("/failing-codes", get(failing))
        .route("/documents/{admission_id}/dd", get(document))
        .route("/concepts", get(concepts))
        .fallback(not_found)
        .with_state(state);
    let app = Router::new().nest("/api/v1", api);
    match ui_dir {
        Some(dir) => app.nest_service("/ui", ServeDir::new(dir)),
        None => app,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state), ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
