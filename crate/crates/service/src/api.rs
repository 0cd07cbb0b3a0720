//! HTTP routes.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cluster_shapley::pipeline::{planned_rows, run};
use cluster_shapley::{
    annotate, parse_dataset, parse_embedding, pca_or_fallback, AnnotationSpec, Artifact,
    ClusterAssignment, Dataset, Embedding, ExplainConfig, RunConfig, Standardize, SummaryConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::store::ArtifactStore;

/// Error body: `{"error": <name>, "message": <text>}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    name: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, name: &str, message: impl Into<String>) -> Self {
        Self { status, name: name.to_string(), message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("unknown {what} `{id}`"))
    }

    fn conflict(name: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, name, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl<E: Into<cluster_shapley::Error>> From<E> for ApiError {
    fn from(e: E) -> Self {
        let e = e.into();
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.name(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.name, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Session {
    dataset: Arc<Dataset>,
    embedding: Option<Arc<Embedding>>,
    assignment: Option<Arc<ClusterAssignment>>,
    explanation_id: Option<String>,
    running: bool,
    created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum RunState {
    Running,
    Finished,
    Failed,
}

struct RunStatus {
    dataset_id: String,
    done: Arc<AtomicUsize>,
    total: usize,
    state: RunState,
    explanation_id: Option<String>,
    error: Option<String>,
}

struct Shared {
    config: ServiceConfig,
    store: ArtifactStore,
    sessions: Mutex<HashMap<String, Session>>,
    runs: Mutex<HashMap<String, RunStatus>>,
    next_run: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        let store = ArtifactStore::open(&config.artifact_dir)?;
        Ok(Self(Arc::new(Shared {
            config,
            store,
            sessions: Mutex::new(HashMap::new()),
            runs: Mutex::new(HashMap::new()),
            next_run: AtomicU64::new(1),
        })))
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.0.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn runs(&self) -> std::sync::MutexGuard<'_, HashMap<String, RunStatus>> {
        self.0.runs.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/embedding", post(set_embedding))
        .route("/datasets/{id}/clusters", post(set_clusters))
        .route("/datasets/{id}/explain", post(explain))
        .route("/runs/{id}", get(run_status))
        .route("/explanations", get(list_explanations))
        .route("/explanations/{id}", get(get_explanation))
        .route("/explanations/{id}/cluster/{c}", get(get_cluster))
        .with_state(state)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Deserialize)]
struct DatasetQuery {
    label_column: Option<String>,
    delimiter: Option<char>,
}

fn dataset_json(d: &Dataset, s: &Session) -> serde_json::Value {
    json!({
        "dataset_id": d.id(),
        "n_rows": d.n_rows(),
        "n_features": d.n_features(),
        "feature_names": d.feature_names(),
        "ground_truth": d.ground_truth(),
        "label_names": d.label_names(),
        "has_embedding": s.embedding.is_some(),
        "k": s.assignment.as_ref().map(|a| a.k()),
        "explanation_id": s.explanation_id,
        "created_at": s.created_at,
    })
}

async fn upload_dataset(
    State(state): State<AppState>,
    Query(q): Query<DatasetQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let delimiter = q.delimiter.unwrap_or(',');
    if !delimiter.is_ascii() {
        return Err(ApiError::bad_request("delimiter must be a single ASCII character"));
    }
    let d = parse_dataset(&body, q.label_column.as_deref(), delimiter as u8)?;
    let id = d.id().to_string();
    let mut sessions = state.sessions();
    let session = sessions.entry(id).or_insert_with(|| Session {
        dataset: Arc::new(d),
        embedding: None,
        assignment: None,
        explanation_id: None,
        running: false,
        created_at: now(),
    });
    Ok((StatusCode::CREATED, Json(dataset_json(&session.dataset, session))))
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let sessions = state.sessions();
    let s = sessions.get(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    Ok(Json(dataset_json(&s.dataset, s)))
}

fn dataset_of(state: &AppState, id: &str) -> ApiResult<Arc<Dataset>> {
    state
        .sessions()
        .get(id)
        .map(|s| s.dataset.clone())
        .ok_or_else(|| ApiError::not_found("dataset", id))
}

#[derive(Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
enum EmbeddingRequest {
    Pca,
}

async fn set_embedding(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let d = dataset_of(&state, &id)?;
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("json"));
    let (e, degenerate) = if is_json {
        let EmbeddingRequest::Pca = parse_json(&body)?;
        let d = d.clone();
        tokio::task::spawn_blocking(move || pca_or_fallback(&d))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??
    } else {
        (parse_embedding(&body, &d)?, false)
    };
    let coords: Vec<[f64; 2]> = (0..e.len()).map(|i| e.point(i)).collect();
    let method = e.method_tag().to_string();
    let mut sessions = state.sessions();
    let s = sessions.get_mut(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    s.embedding = Some(Arc::new(e));
    Ok(Json(json!({
        "dataset_id": id,
        "method": method,
        "degenerate": degenerate,
        "coords": coords,
    })))
}

async fn set_clusters(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let spec: AnnotationSpec = parse_json(&body)?;
    let (d, e) = {
        let sessions = state.sessions();
        let s = sessions.get(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
        (s.dataset.clone(), s.embedding.clone())
    };
    let a = tokio::task::spawn_blocking(move || annotate(&d, e.as_deref(), &spec))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let body = json!({
        "dataset_id": id,
        "k": a.k(),
        "method": a.method(),
        "sizes": a.sizes(),
        "labels": a.labels(),
    });
    let mut sessions = state.sessions();
    let s = sessions.get_mut(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    s.assignment = Some(Arc::new(a));
    Ok(Json(body))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExplainRequest {
    run_id: Option<String>,
    fraction: Option<f64>,
    seed: Option<u64>,
    budget: Option<usize>,
    background: Option<usize>,
    standardize: Option<Standardize>,
    histogram_bins: Option<usize>,
    kde_bins: Option<usize>,
}

async fn explain(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let req: ExplainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ExplainRequest::default()
    } else {
        parse_json(&body)?
    };
    let defaults = &state.0.config;
    let summary_defaults = SummaryConfig::default();
    let cfg = RunConfig {
        explain: ExplainConfig {
            fraction: req.fraction.unwrap_or(0.2),
            seed: req.seed.unwrap_or(defaults.seed),
            budget: req.budget.or(defaults.budget),
            background: req.background.unwrap_or(defaults.background),
        },
        standardize: req.standardize.unwrap_or_default(),
        summaries: SummaryConfig {
            histogram_bins: req.histogram_bins.unwrap_or(summary_defaults.histogram_bins),
            kde_bins: req.kde_bins.unwrap_or(summary_defaults.kde_bins),
            ..summary_defaults
        },
    };

    // Claim the session and register the run.
    let (d, e, a) = {
        let mut sessions = state.sessions();
        let s = sessions.get_mut(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
        let Some(a) = s.assignment.clone() else {
            return Err(ApiError::conflict("NotAnnotated", "post clusters before explaining"));
        };
        if s.running {
            return Err(ApiError::conflict("RunInProgress", "this dataset already has a run in progress"));
        }
        if s.embedding.is_none() {
            s.embedding = Some(Arc::new(pca_or_fallback(&s.dataset)?.0));
        }
        s.running = true;
        (s.dataset.clone(), s.embedding.clone().expect("set above"), a)
    };
    let run_id = req
        .run_id
        .unwrap_or_else(|| format!("run-{}", state.0.next_run.fetch_add(1, Ordering::Relaxed)));
    let done = Arc::new(AtomicUsize::new(0));
    {
        let mut runs = state.runs();
        if runs.get(&run_id).is_some_and(|r| r.state == RunState::Running) {
            drop(runs);
            release(&state, &id);
            return Err(ApiError::conflict("RunInProgress", format!("run `{run_id}` is still running")));
        }
        runs.insert(
            run_id.clone(),
            RunStatus {
                dataset_id: id.clone(),
                done: done.clone(),
                total: planned_rows(&a, cfg.explain.fraction),
                state: RunState::Running,
                explanation_id: None,
                error: None,
            },
        );
    }

    let store = state.0.store.clone();
    let counter = done.clone();
    let outcome = tokio::task::spawn_blocking(move || -> ApiResult<(String, Artifact)> {
        let artifact = run(&d, &e, &a, &cfg, Some(&counter))?;
        let eid = store.put(&artifact).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok((eid, artifact))
    })
    .await
    .unwrap_or_else(|e| Err(ApiError::internal(e.to_string())));

    release(&state, &id);
    let mut runs = state.runs();
    let status = runs.get_mut(&run_id).expect("registered above");
    match outcome {
        Ok((eid, artifact)) => {
            status.state = RunState::Finished;
            status.explanation_id = Some(eid.clone());
            drop(runs);
            if let Some(s) = state.sessions().get_mut(&id) {
                s.explanation_id = Some(eid.clone());
            }
            Ok(Json(json!({
                "explanation_id": eid,
                "run_id": run_id,
                "dataset_id": id,
                "k": artifact.k(),
                "n_test": artifact.explanation.test_indices.len(),
            })))
        }
        Err(err) => {
            status.state = RunState::Failed;
            status.error = Some(err.name.clone());
            Err(err)
        }
    }
}

fn release(state: &AppState, id: &str) {
    if let Some(s) = state.sessions().get_mut(id) {
        s.running = false;
    }
}

async fn run_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let runs = state.runs();
    let r = runs.get(&id).ok_or_else(|| ApiError::not_found("run", &id))?;
    let done = r.done.load(Ordering::Relaxed);
    Ok(Json(json!({
        "run_id": id,
        "dataset_id": r.dataset_id,
        "state": r.state,
        "done": done,
        "total": r.total,
        "progress": if r.total == 0 { 1.0 } else { done as f64 / r.total as f64 },
        "explanation_id": r.explanation_id,
        "error": r.error,
    })))
}

async fn list_explanations(State(state): State<AppState>) -> ApiResult<Json<serde_json::Value>> {
    let store = state.0.store.clone();
    let list = tokio::task::spawn_blocking(move || store.list())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(json!(list)))
}

fn stored_bytes(state: &AppState, id: &str) -> ApiResult<Vec<u8>> {
    state
        .0
        .store
        .get(id)
        .map_err(|e| ApiError::internal(e.to_string()))?
        .ok_or_else(|| ApiError::not_found("explanation", id))
}

async fn get_explanation(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = stored_bytes(&state, &id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn get_cluster(
    State(state): State<AppState>,
    Path((id, c)): Path<(String, usize)>,
) -> ApiResult<Json<serde_json::Value>> {
    let bytes = stored_bytes(&state, &id)?;
    let artifact = tokio::task::spawn_blocking(move || Artifact::from_bytes(&bytes))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let view = artifact
        .cluster_view(c)
        .ok_or_else(|| ApiError::not_found("cluster", &c.to_string()))?;
    Ok(Json(json!(view)))
}
