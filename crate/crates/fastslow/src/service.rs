//! HTTP service: answer and eval endpoints, the backend wire endpoint and a
//! planner endpoint, with a bounded admission queue.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `GET /health` | | 200 `{"status":"ready"}` or 503 `{"status":"starting"}` |
//! | `POST /v1/answer` | [`AnswerRequest`] | [`RunRecord`] |
//! | `POST /v1/eval` | [`EvalRequest`] | [`EvalReport`] |
//! | `POST /v1/backend` | [`WireRequest`] | [`WireResponse`] |
//! | `POST /v1/plan` | [`PlannerRequest`] | `{"text": ...}` |
//!
//! When the queue is full new requests get 429 with `Retry-After: 1`.
//! Errors are `{"error": message}`.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{OwnedSemaphorePermit, Semaphore};

use fastslow_core::Corpus;

use crate::controller::{
    answer_query, evaluate, ControllerConfig, ControllerError, Engine, QueryInput, RunRecord, Strategy,
};
use crate::corpus_io::Manifest;
use crate::planner::PlannerRequest;
use crate::remote::{dispatch, PlanResponse, WireRequest};
use crate::report::EvalReport;
use crate::runlog::{LogEntry, RunLogWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    #[serde(flatten)]
    pub input: QueryInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    #[serde(default)]
    pub items: Option<Vec<String>>,
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct AppState {
    pub engine: Arc<Engine>,
    pub config: ControllerConfig,
    pub parallelism: usize,
    pub corpus: Option<Arc<Corpus>>,
    pub log: Option<Arc<RunLogWriter>>,
    ready: AtomicBool,
    queue: Arc<Semaphore>,
    workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, config: ControllerConfig, workers: usize, queue_depth: usize) -> Self {
        AppState {
            engine,
            config,
            parallelism: 1,
            corpus: None,
            log: None,
            ready: AtomicBool::new(false),
            queue: Arc::new(Semaphore::new(queue_depth.max(1))),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    pub fn with_corpus(mut self, corpus: Arc<Corpus>) -> Self {
        self.corpus = Some(corpus);
        self
    }

    pub fn with_log(mut self, log: Arc<RunLogWriter>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn set_ready(&self, ready: bool) {
        self.ready.store(ready, Ordering::SeqCst);
    }

    pub fn is_ready(&self) -> bool {
        self.ready.load(Ordering::SeqCst)
    }

    fn log(&self, entries: &[LogEntry]) {
        if let Some(w) = &self.log {
            if let Err(e) = w.append_all(entries) {
                tracing::error!("run log: {e}");
            }
        }
    }
}

type Shared = Arc<AppState>;

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(ErrorBody { error: msg.to_string() })).into_response()
}

fn busy() -> Response {
    let mut r = error(StatusCode::TOO_MANY_REQUESTS, "queue full, retry later");
    r.headers_mut().insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
    r
}

/// Admits a request into the queue, then waits for a worker.
async fn admit(state: &AppState) -> Result<(OwnedSemaphorePermit, OwnedSemaphorePermit), Response> {
    let queued = state.queue.clone().try_acquire_owned().map_err(|_| busy())?;
    let worker = state
        .workers
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| error(StatusCode::SERVICE_UNAVAILABLE, "shutting down"))?;
    Ok((queued, worker))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e))
}

fn controller_status(e: &ControllerError) -> StatusCode {
    match e {
        ControllerError::Config(_) => StatusCode::BAD_REQUEST,
        ControllerError::Planner(_) => StatusCode::BAD_GATEWAY,
        ControllerError::Unanswerable(_) => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

async fn health(State(state): State<Shared>) -> Response {
    if state.is_ready() {
        (StatusCode::OK, Json(serde_json::json!({ "status": "ready" }))).into_response()
    } else {
        (StatusCode::SERVICE_UNAVAILABLE, Json(serde_json::json!({ "status": "starting" }))).into_response()
    }
}

async fn answer(State(state): State<Shared>, Json(req): Json<AnswerRequest>) -> Response {
    if !state.is_ready() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "not ready");
    }
    let _permits = match admit(&state).await {
        Ok(p) => p,
        Err(r) => return r,
    };
    let s = state.clone();
    let result = blocking(move || {
        let mut config = s.config.clone();
        if let Some(t) = req.theta {
            config.theta = t;
        }
        let r = answer_query(&s.engine, &req.input, &config);
        if let Ok(rec) = &r {
            s.log(&[LogEntry::Run(Box::new(rec.clone()))]);
        }
        r
    })
    .await;
    match result {
        Ok(Ok(rec)) => Json::<RunRecord>(rec).into_response(),
        Ok(Err(e)) => error(controller_status(&e), e),
        Err(r) => r,
    }
}

async fn eval(State(state): State<Shared>, Json(req): Json<EvalRequest>) -> Response {
    if !state.is_ready() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "not ready");
    }
    let Some(corpus) = state.corpus.clone() else {
        return error(StatusCode::BAD_REQUEST, "service has no corpus");
    };
    let manifest = Manifest { corpus: None, items: req.items.clone(), limit: req.limit };
    let items = match manifest.select(&corpus) {
        Ok(i) => i,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let mut config = state.config.clone();
    if let Some(t) = req.theta {
        if !(t > 0.0 && t < 1.0) {
            return error(StatusCode::BAD_REQUEST, format!("theta {t} outside (0, 1)"));
        }
        config.theta = t;
    }
    if let Some(s) = req.strategy {
        config.strategy = s;
    }
    let _permits = match admit(&state).await {
        Ok(p) => p,
        Err(r) => return r,
    };
    let s = state.clone();
    let result = blocking(move || {
        let (records, report) = evaluate(&s.engine, &items, &config, s.parallelism);
        let mut entries: Vec<LogEntry> = records.into_iter().map(|r| LogEntry::Run(Box::new(r))).collect();
        entries.push(LogEntry::Report(Box::new(report.clone())));
        s.log(&entries);
        report
    })
    .await;
    match result {
        Ok(report) => Json::<EvalReport>(report).into_response(),
        Err(r) => r,
    }
}

async fn backend(State(state): State<Shared>, Json(req): Json<WireRequest>) -> Response {
    let s = state.clone();
    match blocking(move || dispatch(s.engine.backend.as_ref(), &req)).await {
        Ok(resp) => Json(resp).into_response(),
        Err(r) => r,
    }
}

async fn plan(State(state): State<Shared>, Json(req): Json<PlannerRequest>) -> Response {
    let s = state.clone();
    match blocking(move || s.engine.planner.complete(&req)).await {
        Ok(Ok(text)) => Json(PlanResponse { text }).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_GATEWAY, e),
        Err(r) => r,
    }
}

pub fn build_router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/answer", post(answer))
        .route("/v1/eval", post(eval))
        .route("/v1/backend", post(backend))
        .route("/v1/plan", post(plan))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, build_router(state)).with_graceful_shutdown(shutdown).await
}

/// A server on its own thread and runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub state: Shared,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Stops accepting, waits for in-flight requests, joins the thread.
    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds `addr` and serves in the background. The state's readiness is left
/// as is; callers flip it once warm.
pub fn spawn(addr: SocketAddr, state: Shared) -> std::io::Result<ServerHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let bound = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let st = state.clone();
    let thread = std::thread::spawn(move || {
        rt.block_on(serve(listener, st, async {
            let _ = rx.await;
        }))
    });
    Ok(ServerHandle { addr: bound, state, stop: Some(tx), thread: Some(thread) })
}

/// Blocks serving until Ctrl-C.
pub fn run_until_ctrl_c(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        state.set_ready(true);
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down, draining in-flight requests");
        })
        .await
    })
}
