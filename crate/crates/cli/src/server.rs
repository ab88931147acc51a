//! Local HTTP service: the screening API plus static hosting for the web UI.
//!
//! Reads work on the snapshot published after the latest write. Writes go
//! through [`SharedProject::write`] one at a time. LLM batches run on their
//! own threads and are polled through `/llm/jobs`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use abscreen_core::eval::{project_metrics, read_truth_csv, MetricsReport};
use abscreen_core::ingest::{export_records, ExportFormat, ExportScope};
use abscreen_core::llm::{
    confirm_threshold, execute_batch, execution_cost, threshold_preview, BatchOptions, BatchOutcome, ChatProvider,
    CostReport, Pricing, ThresholdPreview,
};
use abscreen_core::ranker::{import_order, rank_unlabeled, RankedQueue, RankerConfig};
use abscreen_core::stopping::{project_signal, StopSignal};
use abscreen_core::store::{Decision, EffectiveStatus, ExecutionId, ExecutionLog, ExecutionType, Project, ProjectData};
use abscreen_core::{Error, RefId};
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::error::CliError;
use crate::shared::{begin_batch, human_decision, BatchRequest, BatchScope, SharedProject, SharedWriter};
use crate::views::{queue_items, QueueItem, RecordView, ReviewView, Viewer};

/// Header naming the reviewer a request acts for.
pub const REVIEWER_HEADER: &str = "x-reviewer";

pub struct ServiceConfig {
    /// Reviewer used when a request names none.
    pub reviewer: String,
    pub blind: bool,
    pub provider: Option<Arc<dyn ChatProvider>>,
    /// Shared by every batch the service starts.
    pub options: BatchOptions,
    pub static_dir: Option<PathBuf>,
    pub pricing: Pricing,
}

impl ServiceConfig {
    pub fn new(reviewer: impl Into<String>) -> Self {
        ServiceConfig {
            reviewer: reviewer.into(),
            blind: false,
            provider: None,
            options: BatchOptions::default(),
            static_dir: None,
            pricing: Pricing::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Completed,
    Interrupted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: u64,
    pub execution_id: ExecutionId,
    pub state: JobState,
    pub targeted: usize,
    pub outcome: Option<BatchOutcome>,
    pub error: Option<ErrorBody>,
}

struct Job {
    view: JobView,
    cancel: Arc<AtomicBool>,
}

struct RankCache {
    version: u64,
    reviewer: Option<String>,
    queue: Option<Arc<RankedQueue>>,
}

pub struct AppState {
    project: Arc<SharedProject>,
    config: ServiceConfig,
    jobs: Mutex<BTreeMap<u64, Job>>,
    rank_cache: Mutex<Option<RankCache>>,
}

impl AppState {
    pub fn new(project: Project, config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            project: Arc::new(SharedProject::new(project)),
            config,
            jobs: Mutex::new(BTreeMap::new()),
            rank_cache: Mutex::new(None),
        })
    }

    pub fn project(&self) -> &SharedProject {
        &self.project
    }

    fn viewer(&self, headers: &HeaderMap) -> Viewer {
        let reviewer = headers
            .get(REVIEWER_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map_or_else(|| self.config.reviewer.clone(), str::to_string);
        Viewer {
            reviewer,
            blind: self.config.blind,
        }
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, BTreeMap<u64, Job>> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn running_job_for(&self, id: &ExecutionId) -> Option<u64> {
        self.jobs()
            .values()
            .find(|j| j.view.state == JobState::Running && &j.view.execution_id == id)
            .map(|j| j.view.job_id)
    }

    /// Ranker output for the current snapshot; `None` during cold start.
    fn ranking(
        &self,
        data: &ProjectData,
        version: u64,
        reviewer: Option<String>,
    ) -> Result<Option<Arc<RankedQueue>>, ApiError> {
        let mut cache = self.rank_cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(c) = cache.as_ref() {
            if c.version == version && c.reviewer == reviewer {
                return Ok(c.queue.clone());
            }
        }
        let config = RankerConfig {
            reviewer: reviewer.clone(),
            ..RankerConfig::from_project(data)?
        };
        let queue = match rank_unlabeled(data, &config) {
            Ok(q) => Some(Arc::new(q)),
            Err(Error::ColdStart) => None,
            Err(e) => return Err(e.into()),
        };
        *cache = Some(RankCache {
            version,
            reviewer,
            queue: queue.clone(),
        });
        Ok(queue)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Encoding(_)
        | Error::EmptyInput(_)
        | Error::Schema(_)
        | Error::Parse(_)
        | Error::KeyDerivation
        | Error::Validation(_)
        | Error::Parameter(_)
        | Error::Csv(_)
        | Error::Json(_) => StatusCode::BAD_REQUEST,
        Error::NotFound { .. } => StatusCode::NOT_FOUND,
        Error::Locked(_) => StatusCode::LOCKED,
        Error::ProjectExists(_) | Error::ReadOnly | Error::Interrupted => StatusCode::CONFLICT,
        Error::Provider(_) => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::new(status_for(&e), e.code(), e.to_string())
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Core(e) => e.into(),
            CliError::File { .. } => ApiError::new(StatusCode::BAD_REQUEST, "io", e.to_string()),
            CliError::Usage(_) => ApiError::new(StatusCode::BAD_REQUEST, "validation", e.to_string()),
            CliError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.code(), other.to_string()),
        }
    }
}

macro_rules! rejection {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(r: $t) -> Self {
                ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
            }
        }
    )*};
}
rejection!(QueryRejection, JsonRejection, PathRejection);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.body }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Ctx = State<Arc<AppState>>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

/// Ref ids arrive as numbers or zero-padded strings.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum IdInput {
    Number(u64),
    Text(String),
}

impl IdInput {
    fn ref_id(&self) -> Result<RefId, Error> {
        match self {
            IdInput::Number(n) => Ok(RefId(*n)),
            IdInput::Text(s) => s.parse(),
        }
    }
}

fn status_filter(raw: Option<&str>) -> Result<Option<EffectiveStatus>, Error> {
    match raw.map(str::trim) {
        None | Some("") | Some("all") => Ok(None),
        Some(s) => s.parse().map(Some),
    }
}

fn in_set(set: Option<&str>, screening_set: &str) -> bool {
    set.is_none_or(|s| s.is_empty() || s == screening_set)
}

#[derive(Debug, Deserialize)]
struct RecordsQuery {
    status: Option<String>,
    set: Option<String>,
}

async fn records(
    State(s): Ctx,
    headers: HeaderMap,
    q: Result<Query<RecordsQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<RecordView>>> {
    let Query(q) = q?;
    let viewer = s.viewer(&headers);
    let wanted = status_filter(q.status.as_deref())?;
    let data = s.project.read();
    let statuses = data.statuses(&viewer.scope());
    let mut out: Vec<RecordView> = data
        .references()
        .iter()
        .filter(|r| in_set(q.set.as_deref(), &r.screening_set))
        .filter_map(|r| {
            let status = statuses[&r.ref_id];
            wanted
                .is_none_or(|w| w == status)
                .then(|| viewer.record_view(&data, r, status))
        })
        .collect();
    out.sort_by_key(|r| r.ref_id);
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    mode: Option<String>,
    set: Option<String>,
    status: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub mode: String,
    /// True when ml mode fell back to import order (cold start).
    pub fallback: bool,
    pub items: Vec<QueueItem>,
}

async fn queue(
    State(s): Ctx,
    headers: HeaderMap,
    q: Result<Query<QueueQuery>, QueryRejection>,
) -> ApiResult<Json<QueueResponse>> {
    let Query(q) = q?;
    let viewer = s.viewer(&headers);
    let mode = q.mode.as_deref().unwrap_or("manual").trim().to_ascii_lowercase();
    let wanted = status_filter(q.status.as_deref())?;
    blocking(move || {
        let version = s.project.version();
        let data = s.project.read();
        let keep = |id: &RefId| {
            data.record(*id)
                .is_some_and(|r| in_set(q.set.as_deref(), &r.screening_set))
        };
        let (entries, fallback): (Vec<(RefId, Option<f64>)>, bool) = match mode.as_str() {
            "manual" => {
                let statuses = data.statuses(&viewer.scope());
                let ids = statuses
                    .iter()
                    .filter(|(id, st)| keep(id) && wanted.is_none_or(|w| w == **st))
                    .map(|(id, _)| (*id, None))
                    .collect();
                (ids, false)
            }
            "ml" => {
                let reviewer = viewer.blind.then(|| viewer.reviewer.clone());
                match s.ranking(&data, version, reviewer.clone())? {
                    Some(queue) => (
                        queue
                            .entries
                            .iter()
                            .filter(|e| keep(&e.ref_id))
                            .map(|e| (e.ref_id, Some(e.probability)))
                            .collect(),
                        false,
                    ),
                    None => (
                        import_order(&data, reviewer.as_deref())
                            .into_iter()
                            .filter(|id| keep(id))
                            .map(|id| (id, None))
                            .collect(),
                        true,
                    ),
                }
            }
            other => return Err(Error::Parameter(format!("mode must be manual or ml, got {other:?}")).into()),
        };
        Ok(Json(QueueResponse {
            items: queue_items(&data, &viewer, entries),
            mode,
            fallback,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    ref_id: IdInput,
    decision: String,
    #[serde(default)]
    reason: String,
    reviewer: Option<String>,
}

async fn post_decision(
    State(s): Ctx,
    headers: HeaderMap,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Decision>)> {
    let Json(body) = body?;
    let reviewer = body.reviewer.clone().unwrap_or_else(|| s.viewer(&headers).reviewer);
    let new = human_decision(&reviewer, body.ref_id.ref_id()?, &body.decision, &body.reason)?;
    blocking(move || {
        let id = s.project.write(|p| p.append_decision(new))?;
        let data = s.project.read();
        let row = data
            .decisions()
            .iter()
            .rev()
            .find(|d| d.decision_id == id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "decision vanished"))?;
        Ok((StatusCode::CREATED, Json(row)))
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictView {
    pub ref_id: RefId,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reviews: Option<Vec<ReviewView>>,
}

async fn conflicts(State(s): Ctx) -> ApiResult<Json<Vec<ConflictView>>> {
    let data = s.project.read();
    let out = data
        .detect_conflicts()
        .into_iter()
        .filter_map(|id| {
            let record = data.record(id)?;
            Some(ConflictView {
                ref_id: id,
                title: record.title.clone(),
                reviews: (!s.config.blind).then(|| {
                    data.latest_per_reviewer(id)
                        .values()
                        .map(|d| ReviewView::from(*d))
                        .collect()
                }),
            })
        })
        .collect();
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct StoppingQuery {
    reviewer: Option<String>,
}

async fn stopping(
    State(s): Ctx,
    headers: HeaderMap,
    q: Result<Query<StoppingQuery>, QueryRejection>,
) -> ApiResult<Json<StopSignal>> {
    let Query(q) = q?;
    let viewer = s.viewer(&headers);
    let reviewer = q.reviewer.or_else(|| viewer.blind.then(|| viewer.reviewer.clone()));
    blocking(move || Ok(Json(project_signal(&s.project.read(), reviewer.as_deref())?))).await
}

async fn get_config(State(s): Ctx) -> Json<serde_json::Map<String, Value>> {
    let data = s.project.read();
    Json(
        data.config()
            .effective()
            .into_iter()
            .map(|(k, v)| (k, Value::String(v)))
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
struct ConfigBody {
    value: Value,
}

async fn put_config(
    State(s): Ctx,
    key: Result<Path<String>, PathRejection>,
    body: Result<Json<ConfigBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Path(key) = key?;
    let Json(body) = body?;
    let value = match body.value {
        Value::String(v) => v,
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => return Err(Error::Validation(format!("config value must be a scalar, got {other}")).into()),
    };
    blocking(move || {
        s.project.write(|p| p.config_set(&key, &value))?;
        Ok(Json(json!({ "key": key, "value": value })))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScopeInput {
    Named(String),
    Ids(Vec<IdInput>),
}

#[derive(Debug, Default, Deserialize)]
struct BatchBody {
    criteria: Option<String>,
    threshold: Option<f64>,
    scope: Option<ScopeInput>,
    /// Resume an existing execution instead of starting a new one.
    execution: Option<String>,
}

async fn post_batch(
    State(s): Ctx,
    body: Result<Json<BatchBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobView>)> {
    let Json(body) = body?;
    let provider = s.config.provider.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "no_provider",
            "the service was started without --provider",
        )
    })?;
    let scope = match &body.scope {
        None => BatchScope::All,
        Some(ScopeInput::Named(name)) => name.parse()?,
        Some(ScopeInput::Ids(ids)) => BatchScope::Ids(ids.iter().map(IdInput::ref_id).collect::<Result<_, _>>()?),
    };
    blocking(move || {
        let ids = scope.resolve(&s.project.read());
        let log = match &body.execution {
            Some(raw) => {
                let id: ExecutionId = raw.parse()?;
                let data = s.project.read();
                let log = data.execution(&id).cloned().ok_or_else(|| Error::NotFound {
                    kind: "execution",
                    id: raw.clone(),
                })?;
                if log.execution_type != ExecutionType::BatchScreening {
                    return Err(Error::Validation(format!("execution {id} is not a batch_screening run")).into());
                }
                log
            }
            None => {
                let request = BatchRequest {
                    criteria: body.criteria.clone(),
                    threshold: body.threshold,
                };
                s.project.write(|p| begin_batch(p, &request, &ids).map_err(into_core))?
            }
        };
        let view = start_job(&s, log, ids, provider)?;
        Ok((StatusCode::ACCEPTED, Json(view)))
    })
    .await
}

fn into_core(e: CliError) -> Error {
    match e {
        CliError::Core(e) => e,
        other => Error::Validation(other.to_string()),
    }
}

fn start_job(
    s: &Arc<AppState>,
    log: ExecutionLog,
    ids: Vec<RefId>,
    provider: Arc<dyn ChatProvider>,
) -> ApiResult<JobView> {
    let execution_id = log.execution_id.clone();
    let cancel = Arc::new(AtomicBool::new(false));
    let view = {
        let mut jobs = s.jobs();
        if jobs
            .values()
            .any(|j| j.view.state == JobState::Running && j.view.execution_id == execution_id)
        {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "job_running",
                format!("execution {execution_id} already has a running job"),
            ));
        }
        let view = JobView {
            job_id: jobs.keys().next_back().map_or(1, |k| k + 1),
            execution_id: execution_id.clone(),
            state: JobState::Running,
            targeted: ids.len(),
            outcome: None,
            error: None,
        };
        jobs.insert(
            view.job_id,
            Job {
                view: view.clone(),
                cancel: cancel.clone(),
            },
        );
        view
    };
    let options = BatchOptions {
        cancel,
        ..s.config.options.clone()
    };
    let state = s.clone();
    let job_id = view.job_id;
    std::thread::spawn(move || {
        let mut writer = SharedWriter(&state.project);
        let result = execute_batch(&mut writer, &execution_id, &ids, provider.as_ref(), &options);
        let mut jobs = state.jobs();
        if let Some(job) = jobs.get_mut(&job_id) {
            match result {
                Ok(outcome) => {
                    job.view.state = JobState::Completed;
                    job.view.outcome = Some(outcome);
                }
                Err(e) => {
                    job.view.state = if matches!(e, Error::Interrupted) {
                        JobState::Interrupted
                    } else {
                        JobState::Failed
                    };
                    job.view.error = Some(ApiError::from(e).body);
                }
            }
        }
    });
    Ok(view)
}

async fn list_jobs(State(s): Ctx) -> Json<Vec<JobView>> {
    Json(s.jobs().values().map(|j| j.view.clone()).collect())
}

fn job_id(raw: Result<Path<u64>, PathRejection>) -> ApiResult<u64> {
    Ok(raw?.0)
}

async fn get_job(State(s): Ctx, id: Result<Path<u64>, PathRejection>) -> ApiResult<Json<JobView>> {
    let id = job_id(id)?;
    s.jobs().get(&id).map(|j| Json(j.view.clone())).ok_or_else(|| {
        Error::NotFound {
            kind: "job",
            id: id.to_string(),
        }
        .into()
    })
}

async fn cancel_job(State(s): Ctx, id: Result<Path<u64>, PathRejection>) -> ApiResult<Json<JobView>> {
    let id = job_id(id)?;
    let jobs = s.jobs();
    let job = jobs.get(&id).ok_or_else(|| Error::NotFound {
        kind: "job",
        id: id.to_string(),
    })?;
    job.cancel.store(true, Ordering::SeqCst);
    Ok(Json(job.view.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionView {
    #[serde(flatten)]
    pub execution: ExecutionLog,
    pub cost: Option<CostReport>,
    pub running_job: Option<u64>,
}

async fn executions(State(s): Ctx) -> ApiResult<Json<Vec<ExecutionView>>> {
    let data = s.project.read();
    let mut out = Vec::new();
    for e in data.executions() {
        let cost = match e.execution_type {
            ExecutionType::BatchScreening => Some(execution_cost(&data, &e.execution_id, &s.config.pricing)?),
            _ => None,
        };
        out.push(ExecutionView {
            execution: e.clone(),
            cost,
            running_job: s.running_job_for(&e.execution_id),
        });
    }
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct PreviewQuery {
    execution: String,
    t: f64,
}

async fn preview(State(s): Ctx, q: Result<Query<PreviewQuery>, QueryRejection>) -> ApiResult<Json<ThresholdPreview>> {
    let Query(q) = q?;
    let id: ExecutionId = q.execution.parse()?;
    Ok(Json(threshold_preview(&s.project.read(), &id, q.t)?))
}

#[derive(Debug, Deserialize)]
struct ConfirmBody {
    execution: String,
    t: f64,
}

async fn confirm(State(s): Ctx, body: Result<Json<ConfirmBody>, JsonRejection>) -> ApiResult<Json<ExecutionLog>> {
    let Json(body) = body?;
    let id: ExecutionId = body.execution.parse()?;
    if let Some(job) = s.running_job_for(&id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "job_running",
            format!("execution {id} is still being screened by job {job}"),
        ));
    }
    blocking(move || Ok(Json(s.project.write(|p| confirm_threshold(p, &id, body.t))?))).await
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    truth: String,
    beta: Option<f64>,
}

async fn metrics(State(s): Ctx, q: Result<Query<MetricsQuery>, QueryRejection>) -> ApiResult<Json<MetricsReport>> {
    let Query(q) = q?;
    blocking(move || {
        let text = crate::error::read_text(std::path::Path::new(&q.truth))?;
        let truth = read_truth_csv(&text)?;
        Ok(Json(project_metrics(&s.project.read(), &truth, q.beta.unwrap_or(7.0))?))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
    scope: Option<String>,
}

async fn export(State(s): Ctx, q: Result<Query<ExportQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let format: ExportFormat = q.format.as_deref().unwrap_or("csv").parse()?;
    let scope: ExportScope = q.scope.as_deref().unwrap_or("all").parse()?;
    let body = export_records(&s.project.read(), format, scope)?;
    let (content_type, file) = match format {
        ExportFormat::Csv => ("text/csv; charset=utf-8", "export.csv"),
        ExportFormat::Ris => ("application/x-research-info-systems", "export.ris"),
    };
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{file}\"")),
        ],
        body,
    )
        .into_response())
}

const INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>abscreen</title></head>\
<body><h1>abscreen</h1><p>No web UI assets were configured. Start the service with \
<code>--static DIR</code> to serve them, or use the JSON API (for example <a href=\"/queue\">/queue</a>).</p>\
</body></html>\n";

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/records", get(records))
        .route("/queue", get(queue))
        .route("/decisions", post(post_decision))
        .route("/conflicts", get(conflicts))
        .route("/stopping", get(stopping))
        .route("/config", get(get_config))
        .route("/config/{key}", put(put_config))
        .route("/llm/batch", post(post_batch))
        .route("/llm/jobs", get(list_jobs))
        .route("/llm/jobs/{id}", get(get_job))
        .route("/llm/jobs/{id}/cancel", post(cancel_job))
        .route("/llm/executions", get(executions))
        .route("/llm/threshold-preview", get(preview))
        .route("/llm/confirm", post(confirm))
        .route("/metrics", get(metrics))
        .route("/export", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX) })).fallback(not_found),
    }
}

/// Serves until Ctrl-C.
pub async fn run(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
