//! HTTP twin of the CLI. Translate runs execute in the background (202 and
//! poll); every run writes its artifacts under `runs_dir/<run id>/`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::value::RawValue;
use tokio::sync::Semaphore;

use fhirforge_core::agent::{AgentStatus, AgentStep, SessionTrace, TraceHeader, TRACE_VERSION};
use fhirforge_core::api::{
    ApiError, RunState, RunView, SearchParams, TranslateAccepted, TranslateRequest, TRACE_CONTENT_TYPE,
};
use fhirforge_core::fhir::sha256_hex;
use fhirforge_core::pipeline::{self, RunConfig, RunError, RunManifest};
use fhirforge_core::terminology::{SearchMode, TerminologyError, DEFAULT_LIMIT};

pub const DEFAULT_MAX_CONCURRENT_RUNS: usize = 4;
pub const DEFAULT_RETRY_AFTER_SECS: u64 = 5;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Configuration every run starts from; requests may patch it.
    pub base: RunConfig,
    pub runs_dir: PathBuf,
    pub max_concurrent_runs: usize,
    pub retry_after_secs: u64,
}

impl ServiceConfig {
    pub fn new(base: RunConfig, runs_dir: impl Into<PathBuf>) -> Self {
        Self {
            base,
            runs_dir: runs_dir.into(),
            max_concurrent_runs: DEFAULT_MAX_CONCURRENT_RUNS,
            retry_after_secs: DEFAULT_RETRY_AFTER_SECS,
        }
    }
}

struct Finished {
    status: AgentStatus,
    bundle_json: Option<String>,
    trace: SessionTrace,
    error: Option<String>,
    manifest: Option<RunManifest>,
}

struct Run {
    document_id: String,
    header: TraceHeader,
    steps: Vec<AgentStep>,
    finished: Option<Finished>,
}

struct Inner {
    config: ServiceConfig,
    runs: Mutex<HashMap<String, Run>>,
    slots: Arc<Semaphore>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        let slots = Arc::new(Semaphore::new(config.max_concurrent_runs));
        AppState(Arc::new(Inner { config, runs: Mutex::new(HashMap::new()), slots }))
    }
}

struct Failure {
    status: StatusCode,
    body: ApiError,
    retry_after: Option<u64>,
}

fn fail(status: StatusCode, kind: &str, message: impl Into<String>) -> Failure {
    Failure { status, body: ApiError { kind: kind.into(), message: message.into() }, retry_after: None }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(self.body)).into_response();
        if let Some(secs) = self.retry_after {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        resp
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let message = e.to_string();
        match e {
            RunError::UnknownValueSet { .. } => fail(StatusCode::NOT_FOUND, "unknown-valueset", message),
            RunError::Terminology(TerminologyError::InvalidQuery(_)) => {
                fail(StatusCode::BAD_REQUEST, "invalid-query", message)
            }
            RunError::Terminology(_) => fail(StatusCode::BAD_GATEWAY, "terminology", message),
            RunError::Provider(_) => fail(StatusCode::BAD_REQUEST, "provider", message),
            RunError::Config(_) | RunError::Agent(_) => fail(StatusCode::BAD_REQUEST, "config", message),
            RunError::Io(_) | RunError::Trace(_) => fail(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/translate", post(translate))
        .route("/v1/runs/{id}", get(get_run))
        .route("/v1/runs/{id}/trace", get(get_trace))
        .route("/v1/validate", post(validate))
        .route("/v1/search", get(search))
        .fallback(|| async { fail(StatusCode::NOT_FOUND, "not-found", "no such endpoint") })
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(AppState::new(config))).await
}

async fn translate(
    State(AppState(inner)): State<AppState>,
    body: Result<Json<TranslateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<TranslateAccepted>), Failure> {
    let Json(req) = body.map_err(|e| fail(StatusCode::BAD_REQUEST, "bad-request", e.body_text()))?;
    if req.text.trim().is_empty() {
        return Err(fail(StatusCode::BAD_REQUEST, "bad-request", "text is empty"));
    }
    let permit = inner.slots.clone().try_acquire_owned().map_err(|_| Failure {
        retry_after: Some(inner.config.retry_after_secs),
        ..fail(
            StatusCode::TOO_MANY_REQUESTS,
            "too-many-runs",
            format!("{} runs already in progress", inner.config.max_concurrent_runs),
        )
    })?;
    let config = match &req.config {
        Some(patch) => inner.config.base.with_overrides(patch)?,
        None => inner.config.base.clone(),
    };
    let (agent, mut provider) = pipeline::prepare(&config)?;

    let run_id = pipeline::new_run_id();
    let document_id = req.document_id.clone().unwrap_or_else(|| run_id.clone());
    let header =
        TraceHeader { version: TRACE_VERSION, document_sha256: sha256_hex(&req.text), config: config.snapshot() };
    inner
        .runs
        .lock()
        .expect("run registry")
        .insert(run_id.clone(), Run { document_id: document_id.clone(), header, steps: Vec::new(), finished: None });

    let id = run_id.clone();
    tokio::spawn(async move {
        let _permit = permit;
        let started = Instant::now();
        let live = inner.clone();
        let live_id = id.clone();
        let mut observer = move |step: &AgentStep| {
            if let Some(run) = live.runs.lock().expect("run registry").get_mut(&live_id) {
                run.steps.push(step.clone());
            }
        };
        let outcome = agent.run_observed(&req.text, provider.as_mut(), &mut observer).await;
        let dir = inner.config.runs_dir.join(&id);
        let written =
            pipeline::write_artifacts(&dir, &id, &document_id, &req.text, &config, &outcome, started.elapsed());
        let (manifest, error) = match written {
            Ok(m) => (Some(m), outcome.error.clone()),
            Err(e) => {
                tracing::error!(run = %id, error = %e, "writing artifacts failed");
                (None, Some(format!("artifacts not written: {e}")))
            }
        };
        tracing::info!(run = %id, status = %outcome.status, "run finished");
        if let Some(run) = inner.runs.lock().expect("run registry").get_mut(&id) {
            run.finished = Some(Finished {
                status: outcome.status,
                bundle_json: outcome.bundle_json,
                trace: outcome.trace,
                error,
                manifest,
            });
        }
    });
    Ok((StatusCode::ACCEPTED, Json(TranslateAccepted { run_id })))
}

fn unknown_run(id: &str) -> Failure {
    fail(StatusCode::NOT_FOUND, "not-found", format!("no run {id}"))
}

async fn get_run(State(AppState(inner)): State<AppState>, Path(id): Path<String>) -> Result<Json<RunView>, Failure> {
    let runs = inner.runs.lock().expect("run registry");
    let run = runs.get(&id).ok_or_else(|| unknown_run(&id))?;
    let mut view = RunView {
        run_id: id.clone(),
        document_id: run.document_id.clone(),
        state: RunState::Running,
        steps: run.steps.len(),
        status: None,
        bundle: None,
        bundle_sha256: None,
        error: None,
        manifest: None,
    };
    if let Some(f) = &run.finished {
        view.state = RunState::Done;
        view.steps = f.trace.steps.len();
        view.status = Some(f.status);
        view.bundle = f.bundle_json.clone().map(|b| RawValue::from_string(b).expect("canonical bundle is JSON"));
        view.bundle_sha256 = f.bundle_json.as_deref().map(sha256_hex);
        view.error = f.error.clone();
        view.manifest = f.manifest.clone();
    }
    Ok(Json(view))
}

/// Complete trace once finished; while running, header and steps so far.
async fn get_trace(State(AppState(inner)): State<AppState>, Path(id): Path<String>) -> Result<Response, Failure> {
    let runs = inner.runs.lock().expect("run registry");
    let run = runs.get(&id).ok_or_else(|| unknown_run(&id))?;
    let text = match &run.finished {
        Some(f) => f.trace.to_jsonl(),
        None => SessionTrace { header: run.header.clone(), steps: run.steps.clone(), end: None }.to_jsonl(),
    };
    Ok(([(header::CONTENT_TYPE, TRACE_CONTENT_TYPE)], text).into_response())
}

async fn validate(body: Bytes) -> Result<Response, Failure> {
    let text = std::str::from_utf8(&body).map_err(|e| fail(StatusCode::BAD_REQUEST, "bad-request", e.to_string()))?;
    Ok(Json(pipeline::validate_text(text)).into_response())
}

async fn search(
    State(AppState(inner)): State<AppState>,
    params: Result<Query<SearchParams>, QueryRejection>,
) -> Result<Response, Failure> {
    let Query(p) = params.map_err(|e| fail(StatusCode::BAD_REQUEST, "bad-request", e.body_text()))?;
    let mut terminology = inner.config.base.terminology.clone();
    if let Some(b) = &p.backend {
        terminology.mode = b.parse::<SearchMode>().map_err(|e| fail(StatusCode::BAD_REQUEST, "bad-request", e))?;
    }
    let limit = p.limit.unwrap_or(DEFAULT_LIMIT);
    let report =
        pipeline::search(&terminology, &inner.config.base.agent, &p.text, p.valueset.as_deref(), limit).await?;
    Ok(Json(report).into_response())
}
