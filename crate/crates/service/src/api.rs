//! HTTP API. Every body is JSON except the CSV upload; errors are
//! `{code, message, detail}` with a matching status.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use qrisk_core::market::Portfolio;
use qrisk_core::randtest::BatteryConfig;
use qrisk_core::risk::{histogram, Method, RiskJobConfig};
use qrisk_core::source::RandomSourceDescriptor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::engine;
use crate::error::{Result, ServiceError};
use crate::jobs::{JobRecord, JobRequest, JobStatus, JobStore};
use crate::store::{NamedPortfolio, Store};

/// Environment variable naming the listen address.
pub const ADDR_ENV: &str = "QRISK_ADDR";
/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "QRISK_DATA_DIR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

pub struct AppState {
    pub store: Store,
    pub jobs: JobStore,
    workers: Semaphore,
    pub battery: BatteryConfig,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Opens the data directory; `workers` bounds concurrently running jobs.
    pub fn open(data_dir: impl Into<std::path::PathBuf>, workers: usize) -> Result<SharedState> {
        let store = Store::open(data_dir)?;
        let jobs = JobStore::open(store.jobs_log())?;
        Ok(Arc::new(Self {
            store,
            jobs,
            workers: Semaphore::new(workers.max(1)),
            battery: BatteryConfig::default(),
        }))
    }
}

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<qrisk_core::market::MarketError> for ApiError {
    fn from(e: qrisk_core::market::MarketError) -> Self {
        ApiError(e.into())
    }
}

impl From<qrisk_core::risk::RiskError> for ApiError {
    fn from(e: qrisk_core::risk::RiskError) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Parses a JSON body, reporting syntax errors in the common error shape.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(format!("malformed body: {e}")))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/sources", post(register_source).get(list_sources))
        .route("/sources/{id}", get(get_source))
        .route("/sources/{id}/validate", post(validate_source))
        .route("/validation/{id}", get(get_validation))
        .route("/prices", post(upload_prices).get(list_prices))
        .route("/portfolios", post(create_portfolio).get(list_portfolios))
        .route("/portfolios/{id}", get(get_portfolio))
        .route("/jobs", post(submit_job).get(list_jobs))
        .route("/jobs/{id}", get(get_job).delete(delete_job))
        .route("/jobs/{id}/report", get(get_report))
        .route("/jobs/{id}/histogram", get(get_histogram))
        .with_state(state)
}

/// Binds, re-queues jobs left over from a previous run and serves until
/// ctrl-c.
pub async fn serve(state: SharedState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(state, listener).await
}

pub async fn serve_on(state: SharedState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    resume(&state).map_err(std::io::Error::other)?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn resume(state: &SharedState) -> Result<()> {
    for id in state.jobs.recover()? {
        spawn_job(state.clone(), id);
    }
    Ok(())
}

async fn register_source(State(state): State<SharedState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let descriptor: RandomSourceDescriptor = parse_body(&body)?;
    let entry = state.store.register_source(descriptor)?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn list_sources(State(state): State<SharedState>) -> impl IntoResponse {
    Json(state.store.sources())
}

async fn get_source(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(state.store.source(&id)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateRequest {
    samples: usize,
}

async fn validate_source(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let request: ValidateRequest = parse_body(&body)?;
    let entry = state.store.source(&id)?;
    let battery = state.battery;
    let report =
        tokio::task::spawn_blocking(move || engine::validate_source(&entry.descriptor, request.samples, &battery))
            .await
            .map_err(|e| ServiceError::Invalid(format!("validation task failed: {e}")))??;
    let stored = state.store.save_validation(&id, report)?;
    Ok(Json(stored))
}

async fn get_validation(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(state.store.validation(&id)?))
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    id: Option<String>,
}

async fn upload_prices(
    State(state): State<SharedState>,
    Query(query): Query<UploadQuery>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let summary = state.store.put_prices(query.id, &body)?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_prices(State(state): State<SharedState>) -> impl IntoResponse {
    Json(state.store.prices())
}

/// Either explicit weights or a seeded random draw over the tickers of a
/// stored price history.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PortfolioRequest {
    id: Option<String>,
    tickers: Option<Vec<String>>,
    weights: Option<Vec<f64>>,
    random_seed: Option<u64>,
    prices: Option<String>,
}

async fn create_portfolio(State(state): State<SharedState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: PortfolioRequest = parse_body(&body)?;
    let tickers = match (request.tickers, &request.prices) {
        (Some(t), _) => t,
        (None, Some(prices)) => state.store.price_summary(prices)?.tickers,
        (None, None) => return Err(ServiceError::Invalid("portfolio needs tickers or a prices id".into()).into()),
    };
    let portfolio = match (request.weights, request.random_seed) {
        (Some(w), None) => Portfolio::new(tickers, w)?,
        (None, Some(seed)) => Portfolio::random(tickers, seed)?,
        _ => return Err(ServiceError::Invalid("give exactly one of weights or random_seed".into()).into()),
    };
    Ok((
        StatusCode::CREATED,
        Json(state.store.put_portfolio(request.id, portfolio)?),
    ))
}

async fn list_portfolios(State(state): State<SharedState>) -> impl IntoResponse {
    Json(state.store.portfolios())
}

async fn get_portfolio(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let portfolio = state.store.portfolio(&id)?;
    Ok(Json(NamedPortfolio { id, portfolio }))
}

/// Resolves stored inputs and checks the configuration, so bad requests
/// fail before anything is queued.
fn prepare(state: &AppState, request: &JobRequest) -> Result<RiskJobConfig> {
    let calibration = state.store.calibration(&request.prices)?;
    let portfolio = state.store.portfolio(&request.portfolio)?;
    let source = match (&request.source, request.method) {
        (Some(id), _) => Some(state.store.source(id)?.descriptor),
        (None, Method::MonteCarlo) => {
            return Err(ServiceError::Invalid("Monte Carlo jobs need a source".into()));
        }
        (None, Method::Historical) => None,
    };
    let config = RiskJobConfig {
        portfolio,
        method: request.method,
        alpha: request.alpha,
        horizon_days: request.horizon_days,
        paths: request.paths,
        horizon_rule: request.horizon_rule,
        source,
        substream: request.substream,
    };
    engine::check_config(&config, &calibration)?;
    Ok(config)
}

async fn submit_job(State(state): State<SharedState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: JobRequest = parse_body(&body)?;
    let config = prepare(&state, &request)?;
    let record = JobRecord::new(request, config);
    state.jobs.insert(record.clone())?;
    spawn_job(state.clone(), record.id.clone());
    Ok((StatusCode::ACCEPTED, Json(record)))
}

/// Waits for a worker slot, then runs the job on the blocking pool.
fn spawn_job(state: SharedState, id: String) {
    tokio::spawn(async move {
        let Ok(_permit) = state.workers.acquire().await else {
            return;
        };
        let worker_state = state.clone();
        let worker_id = id.clone();
        let joined = tokio::task::spawn_blocking(move || run_job(&worker_state, &worker_id)).await;
        if let Err(e) = joined {
            let _ = state.jobs.transition(&id, JobStatus::Failed, |r| {
                r.finished_at = Some(Utc::now());
                r.error = Some(ServiceError::Invalid(format!("worker panicked: {e}")).body());
            });
        }
    });
}

fn run_job(state: &AppState, id: &str) {
    let record = match state
        .jobs
        .transition(id, JobStatus::Running, |r| r.started_at = Some(Utc::now()))
    {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(job = id, error = %e, "job not runnable");
            return;
        }
    };
    let result = state
        .store
        .calibration(&record.request.prices)
        .and_then(|calibration| engine::execute(&record.config, &calibration))
        .and_then(|execution| {
            state.store.save_returns(id, &execution.outcome.returns)?;
            Ok(execution)
        });
    let finished = match result {
        Ok(execution) => state.jobs.transition(id, JobStatus::Done, |r| {
            r.finished_at = Some(Utc::now());
            r.report = Some(execution.outcome.report);
            r.entropy = execution.entropy;
        }),
        Err(e) => {
            tracing::warn!(job = id, error = %e, "job failed");
            state.jobs.transition(id, JobStatus::Failed, |r| {
                r.finished_at = Some(Utc::now());
                r.error = Some(e.body());
            })
        }
    };
    if let Err(e) = finished {
        tracing::error!(job = id, error = %e, "could not record job outcome");
    }
}

async fn list_jobs(State(state): State<SharedState>) -> impl IntoResponse {
    Json(state.jobs.list())
}

async fn get_job(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(state.jobs.get(&id)?))
}

async fn delete_job(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    state.jobs.delete(&id)?;
    state.store.delete_returns(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn finished_job(state: &AppState, id: &str) -> Result<JobRecord> {
    let record = state.jobs.get(id)?;
    match record.status {
        JobStatus::Done => Ok(record),
        JobStatus::Failed => Err(ServiceError::NotReady(format!(
            "job {id} failed: {}",
            record.error.map(|e| e.message).unwrap_or_default()
        ))),
        other => Err(ServiceError::NotReady(format!("job {id} is {other:?}"))),
    }
}

async fn get_report(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let record = finished_job(&state, &id)?;
    Ok(Json(record.report.expect("done jobs carry a report")))
}

#[derive(Debug, Deserialize)]
struct HistogramQuery {
    bins: Option<usize>,
}

/// Maximum bins a histogram request may ask for.
pub const MAX_BINS: usize = 10_000;

#[derive(Debug, Serialize, Deserialize)]
pub struct HistogramResponse {
    pub job_id: String,
    pub bins: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

async fn get_histogram(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(query): Query<HistogramQuery>,
) -> ApiResult<impl IntoResponse> {
    let bins = query.bins.unwrap_or(50);
    if bins == 0 || bins > MAX_BINS {
        return Err(ServiceError::Invalid(format!("bins must lie in 1..={MAX_BINS}")).into());
    }
    finished_job(&state, &id)?;
    let returns = state.store.load_returns(&id)?;
    let h = histogram(&returns, bins)?;
    Ok(Json(HistogramResponse {
        job_id: id,
        bins,
        edges: h.edges,
        counts: h.counts,
    }))
}
