//! HTTP/JSON front of the simulator.
//!
//! Experiments are submitted as spec text, queued, and run one at a time on a
//! blocking thread; clients poll the job and fetch `results.csv` when it is
//! done. Power allocation and evaluation are answered inline.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use homad_core::api::{
    allocate, evaluate_request, AllocateRequest, AllocateResponse, ErrorBody, EvaluateRequest, EvaluateResponse,
    Health, JobState, JobView, SubmitRequest, SummarizeRequest, ValidateResponse,
};
use homad_core::experiment::{emit_csv, run_experiment, summarize_dir, ConvergenceSummary, ExperimentSpec};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (
            status,
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Job registry shared by the handlers.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    jobs: Mutex<BTreeMap<u64, JobView>>,
    next_id: AtomicU64,
    workers: usize,
    /// One experiment at a time; later submissions wait in `Queued`.
    runner: Semaphore,
}

impl AppState {
    pub fn new(workers: usize) -> Self {
        Self {
            inner: Arc::new(Inner {
                jobs: Mutex::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
                workers: workers.max(1),
                runner: Semaphore::new(1),
            }),
        }
    }

    fn update(&self, id: u64, f: impl FnOnce(&mut JobView)) {
        if let Some(job) = self.inner.jobs.lock().unwrap().get_mut(&id) {
            f(job);
        }
    }

    fn job(&self, id: u64) -> ApiResult<JobView> {
        self.inner
            .jobs
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no job {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/spec/default", get(default_spec))
        .route("/v1/spec/validate", post(validate_spec))
        .route("/v1/experiments", post(submit).get(list_jobs))
        .route("/v1/experiments/:id", get(get_job))
        .route("/v1/experiments/:id/results.csv", get(job_results))
        .route("/v1/summarize", post(summarize))
        .route("/v1/allocate", post(allocate_handler))
        .route("/v1/evaluate", post(evaluate_handler))
        .with_state(state)
}

/// Serves on `listener` until the process ends.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(addr: SocketAddr, workers: usize) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, AppState::new(workers)).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(bound)
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn default_spec() -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        ExperimentSpec::default().to_text(),
    )
}

fn parse_spec(text: &str) -> ApiResult<ExperimentSpec> {
    ExperimentSpec::from_text(text).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn validate_spec(body: String) -> ApiResult<Json<ValidateResponse>> {
    let spec = parse_spec(&body)?;
    Ok(Json(ValidateResponse {
        runs: spec.points().len() * spec.replications,
        normalized: spec.to_text(),
    }))
}

async fn submit(
    State(state): State<AppState>,
    Json(req): Json<SubmitRequest>,
) -> ApiResult<(StatusCode, Json<JobView>)> {
    let spec = parse_spec(&req.spec)?;
    let id = state.inner.next_id.fetch_add(1, Ordering::Relaxed);
    let view = JobView {
        id,
        state: JobState::Queued,
        done: 0,
        total: spec.points().len() * spec.replications,
        error: None,
        out_dir: req.out_dir.clone(),
        rows: Vec::new(),
    };
    state.inner.jobs.lock().unwrap().insert(id, view.clone());
    tracing::info!(id, runs = view.total, "experiment queued");

    let worker = state.clone();
    tokio::spawn(async move {
        let _permit = worker.inner.runner.acquire().await.expect("semaphore is never closed");
        worker.update(id, |j| j.state = JobState::Running);
        let progress_state = worker.clone();
        let out_dir = req.out_dir.map(PathBuf::from);
        let workers = worker.inner.workers;
        let result = tokio::task::spawn_blocking(move || {
            let progress = move |done, total| progress_state.update(id, |j| (j.done, j.total) = (done, total));
            run_experiment(&spec, out_dir.as_deref(), workers, &progress)
        })
        .await;
        match result {
            Ok(Ok(out)) => worker.update(id, |j| {
                j.state = JobState::Completed;
                j.rows = out.rows;
            }),
            Ok(Err(e)) => worker.update(id, |j| {
                j.state = JobState::Failed;
                j.error = Some(e.to_string());
            }),
            Err(e) => worker.update(id, |j| {
                j.state = JobState::Failed;
                j.error = Some(format!("experiment task panicked: {e}"));
            }),
        }
        tracing::info!(id, "experiment finished");
    });
    Ok((StatusCode::ACCEPTED, Json(view)))
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobView>> {
    Json(state.inner.jobs.lock().unwrap().values().cloned().collect())
}

async fn get_job(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobView>> {
    state.job(id).map(Json)
}

async fn job_results(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Response> {
    let job = state.job(id)?;
    if job.state != JobState::Completed {
        return Err(ApiError::Conflict(
            format!("job {id} is {:?}", job.state).to_lowercase(),
        ));
    }
    let mut buf = Vec::new();
    emit_csv(&job.rows, &mut buf).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
}

async fn summarize(Json(req): Json<SummarizeRequest>) -> ApiResult<Json<Vec<ConvergenceSummary>>> {
    let dir = PathBuf::from(&req.dir);
    if !dir.join("timings.csv").is_file() {
        return Err(ApiError::NotFound(format!("{} has no timings.csv", dir.display())));
    }
    summarize_dir(&dir)
        .map(Json)
        .map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn allocate_handler(Json(req): Json<AllocateRequest>) -> ApiResult<Json<AllocateResponse>> {
    tokio::task::spawn_blocking(move || allocate(&req))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map(Json)
        .map_err(ApiError::BadRequest)
}

async fn evaluate_handler(Json(req): Json<EvaluateRequest>) -> ApiResult<Json<EvaluateResponse>> {
    evaluate_request(&req).map(Json).map_err(ApiError::BadRequest)
}
