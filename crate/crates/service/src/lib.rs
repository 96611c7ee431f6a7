//! HTTP/JSON session service around the rulehide pipeline.
//!
//! Each session is a directory under the data directory holding the
//! current dataset (`dataset.csv`, with provenance column), the last
//! preview plan (`plan.json`) and the pending request set
//! (`session.json`), so sessions survive restarts.
//!
//! | method | path | body | response |
//! |--------|------|------|----------|
//! | POST | `/sessions` | CSV | `{session_id, tree, rules}` |
//! | GET | `/sessions/{id}/tree` | | tree JSON |
//! | POST | `/sessions/{id}/preview` | [`HideBody`] | `{preview_token, plan, report}` |
//! | POST | `/sessions/{id}/commit` | [`HideBody`] with `preview_token` | report |
//! | GET | `/sessions/{id}/export` | | sanitized CSV |
//! | DELETE | `/sessions/{id}` | | `{ok: true}` |
//!
//! Errors are `{code, message, node_id?}` with status 400 (bad input),
//! 404 (unknown session), 409 (stale or missing preview token) or 422
//! (rule not found, infeasible, unsolvable).

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use rulehide::cli::{sanitize, CommandError, RelaxSpec, RunConfig, StrategyName};
use rulehide::evaluation::{evaluate, EvaluationReport};
use rulehide::hiding::HidingPlan;
use rulehide::tree::{induce, InductionConfig, TreeJson};
use rulehide::{CsvExport, Dataset};

const DATASET_FILE: &str = "dataset.csv";
const PLAN_FILE: &str = "plan.json";
const SESSION_FILE: &str = "session.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_id: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into(), node_id: None } }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        let status = match e {
            CommandError::Parse(_) => StatusCode::BAD_REQUEST,
            CommandError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError {
            status,
            body: ErrorBody { code: e.code().into(), message: e.to_string(), node_id: e.node_id().map(|n| n.0) },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// `relax` accepts a bare shift for the root, one spec string, or a list
/// mixing both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RelaxField {
    Shift(u64),
    Spec(RelaxSpec),
    Many(Vec<RelaxItem>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RelaxItem {
    Shift(u64),
    Spec(RelaxSpec),
}

impl RelaxItem {
    fn spec(&self) -> RelaxSpec {
        match self {
            RelaxItem::Shift(d) => RelaxSpec { node: None, max_shift: *d },
            RelaxItem::Spec(s) => *s,
        }
    }
}

impl RelaxField {
    pub fn specs(&self) -> Vec<RelaxSpec> {
        match self {
            RelaxField::Shift(d) => vec![RelaxItem::Shift(*d).spec()],
            RelaxField::Spec(s) => vec![*s],
            RelaxField::Many(items) => items.iter().map(RelaxItem::spec).collect(),
        }
    }
}

/// Body of preview and commit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HideBody {
    pub requests: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relax: Option<RelaxField>,
    pub strategy: StrategyName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preview_token: Option<String>,
}

impl HideBody {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            requests: self.requests.clone(),
            relax: self.relax.as_ref().map(RelaxField::specs).unwrap_or_default(),
            strategy: self.strategy,
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub tree: TreeJson,
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub preview_token: String,
    pub plan: HidingPlan,
    pub report: EvaluationReport,
}

/// What a session remembers between calls besides its dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Pending {
    requests: Vec<String>,
    relax: Vec<RelaxSpec>,
    strategy: StrategyName,
    commits: u32,
}

#[derive(Debug, Default)]
struct Sessions {
    locks: Mutex<HashMap<Uuid, Arc<tokio::sync::Mutex<()>>>>,
}

impl Sessions {
    fn lock_for(&self, id: Uuid) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().expect("lock map poisoned").entry(id).or_default().clone()
    }

    fn forget(&self, id: Uuid) {
        self.locks.lock().expect("lock map poisoned").remove(&id);
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    data_dir: Arc<PathBuf>,
    sessions: Arc<Sessions>,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>) -> io::Result<Self> {
        let data_dir = data_dir.into();
        fs::create_dir_all(&data_dir)?;
        Ok(AppState { data_dir: Arc::new(data_dir), sessions: Arc::default() })
    }

    fn session_dir(&self, raw: &str) -> ApiResult<(Uuid, PathBuf)> {
        // parsing first also rules out path tricks in the id
        let id = Uuid::parse_str(raw).map_err(|_| ApiError::not_found(raw))?;
        let dir = self.data_dir.join(id.to_string());
        if !dir.join(DATASET_FILE).is_file() {
            return Err(ApiError::not_found(raw));
        }
        Ok((id, dir))
    }
}

/// Builds the router; `data_dir` is created if missing.
pub fn router(data_dir: impl Into<PathBuf>) -> io::Result<Router> {
    Ok(app(AppState::new(data_dir)?))
}

pub fn app(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/tree", get(get_tree))
        .route("/sessions/{id}/preview", post(preview))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(state)
}

/// Content hash of a dataset, echoed by commit.
pub fn dataset_token(ds: &Dataset) -> String {
    let bytes = ds
        .to_csv_bytes(CsvExport { include_provenance: true, allow_partial: true })
        .expect("in-memory write");
    hex::encode(Sha256::digest(&bytes))
}

fn store_dataset(dir: &Path, ds: &Dataset) -> ApiResult<()> {
    let bytes = ds
        .to_csv_bytes(CsvExport { include_provenance: true, allow_partial: false })
        .map_err(ApiError::internal)?;
    write_atomic(&dir.join(DATASET_FILE), &bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> ApiResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(ApiError::internal)?;
    fs::rename(&tmp, path).map_err(ApiError::internal)
}

fn load_dataset(dir: &Path) -> ApiResult<Dataset> {
    let bytes = fs::read(dir.join(DATASET_FILE)).map_err(ApiError::internal)?;
    Dataset::load_csv(bytes.as_slice()).map_err(ApiError::internal)
}

fn load_pending(dir: &Path) -> ApiResult<Pending> {
    match fs::read(dir.join(SESSION_FILE)) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(ApiError::internal),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Pending::default()),
        Err(e) => Err(ApiError::internal(e)),
    }
}

fn store_json<T: Serialize>(path: &Path, value: &T) -> ApiResult<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value).map_err(ApiError::internal)?)
}

fn parse_body(bytes: &Bytes) -> ApiResult<HideBody> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(HideBody::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "parse_error", e.to_string()))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let ds = Dataset::load_csv(body.as_ref()).map_err(|e| ApiError::from(CommandError::from(e)))?;
    let tree = induce(&ds, &InductionConfig::default()).map_err(|e| ApiError::from(CommandError::from(e)))?;
    let id = Uuid::new_v4();
    let dir = state.data_dir.join(id.to_string());
    fs::create_dir_all(&dir).map_err(ApiError::internal)?;
    store_dataset(&dir, &ds)?;
    let rules = tree.extract_rules().iter().map(|r| r.render(tree.schema())).collect();
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id: id.to_string(), tree: tree.to_json(), rules })))
}

async fn get_tree(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<TreeJson>> {
    let (uuid, dir) = state.session_dir(&id)?;
    let lock = state.sessions.lock_for(uuid);
    let _guard = lock.lock().await;
    let ds = load_dataset(&dir)?;
    let tree = induce(&ds, &InductionConfig::default()).map_err(|e| ApiError::from(CommandError::from(e)))?;
    Ok(Json(tree.to_json()))
}

async fn preview(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Preview>> {
    let (uuid, dir) = state.session_dir(&id)?;
    let body = parse_body(&body)?;
    let lock = state.sessions.lock_for(uuid);
    let _guard = lock.lock().await;
    let ds = load_dataset(&dir)?;
    let config = body.run_config();
    let result = sanitize(&ds, &config)?;
    let report = evaluate(&result);
    let mut pending = load_pending(&dir)?;
    pending.requests = config.requests;
    pending.relax = config.relax;
    pending.strategy = config.strategy;
    store_json(&dir.join(SESSION_FILE), &pending)?;
    store_json(&dir.join(PLAN_FILE), &result.plan)?;
    Ok(Json(Preview { preview_token: dataset_token(&ds), plan: result.plan, report }))
}

async fn commit(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<EvaluationReport>> {
    let (uuid, dir) = state.session_dir(&id)?;
    let body = parse_body(&body)?;
    let lock = state.sessions.lock_for(uuid);
    let _guard = lock.lock().await;
    let ds = load_dataset(&dir)?;
    match &body.preview_token {
        Some(token) if *token == dataset_token(&ds) => {}
        Some(_) => {
            return Err(ApiError::new(StatusCode::CONFLICT, "stale_preview", "dataset changed since the preview"));
        }
        None => {
            return Err(ApiError::new(StatusCode::CONFLICT, "missing_preview_token", "commit requires a preview token"));
        }
    }
    let config = body.run_config();
    let result = sanitize(&ds, &config)?;
    let report = evaluate(&result);
    store_dataset(&dir, &result.sanitized)?;
    store_json(&dir.join(PLAN_FILE), &result.plan)?;
    let mut pending = load_pending(&dir)?;
    pending.requests.clear();
    pending.relax.clear();
    pending.commits += 1;
    store_json(&dir.join(SESSION_FILE), &pending)?;
    Ok(Json(report))
}

async fn export(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let (uuid, dir) = state.session_dir(&id)?;
    let lock = state.sessions.lock_for(uuid);
    let _guard = lock.lock().await;
    let ds = load_dataset(&dir)?;
    let bytes = ds.to_csv_bytes(CsvExport::default()).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], bytes).into_response())
}

async fn delete_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let (uuid, dir) = state.session_dir(&id)?;
    let lock = state.sessions.lock_for(uuid);
    {
        let _guard = lock.lock().await;
        fs::remove_dir_all(&dir).map_err(ApiError::internal)?;
    }
    state.sessions.forget(uuid);
    Ok(Json(serde_json::json!({ "ok": true })))
}
