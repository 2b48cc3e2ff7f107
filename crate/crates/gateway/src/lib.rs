//! HTTP control plane for an [`apimap::Engine`].
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | `/ingest` | one or more JSONL request records | `{ingested, learned, anomalous, outcomes}`; each outcome is `{"kind": "learned"}` or `{"kind": "verdict", ...verdict}` |
//! | GET | `/tree` | | learned tree snapshot |
//! | GET | `/schema` | `?version=` | reduced schema view (409 before a baseline) |
//! | GET | `/openapi.json` | | OpenAPI document (409 before a baseline) |
//! | GET | `/stats` | | engine counters, latency summary, event drops |
//! | POST | `/phase` | `{"target": "training" \| "updating" \| "detection"}` | `{phase}` |
//! | POST | `/baseline` | | baseline report |
//! | POST | `/reset` | | `{phase}` |
//! | GET | `/events` | | NDJSON stream of anomaly events and heartbeats |
//! | GET | `/diff` | `?from=&to=[&format=text]` | schema diff |
//!
//! Errors are `{"error": "...", "phase": "..."}` with a 4xx/5xx status.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use apimap::engine::EngineStats;
use apimap::{Engine, Error, IngestOutcome, Phase, RawRequest, Verdict};
use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, watch, Mutex};
use tower_http::trace::TraceLayer;

pub const HEARTBEAT: Duration = Duration::from_secs(15);
/// Per-subscriber event buffer; the oldest events are dropped on overflow.
pub const EVENT_BUFFER: usize = 1024;
const MAX_INGEST_BYTES: usize = 256 * 1024 * 1024;

/// One anomalous verdict as pushed on `/events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    /// Increases by one per published event, starting at 1.
    pub seq: u64,
    pub method: String,
    pub url: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamLine {
    Anomaly(AnomalyEvent),
    Heartbeat,
}

pub struct AppState {
    pub engine: Arc<Engine>,
    events: broadcast::Sender<AnomalyEvent>,
    /// Keeps ingest-and-publish atomic so events leave in classification order.
    ingest_order: Arc<Mutex<u64>>,
    dropped: AtomicU64,
    heartbeat: Duration,
    shutdown: watch::Sender<bool>,
}

impl AppState {
    pub fn new(engine: Engine) -> Arc<Self> {
        Self::with_heartbeat(engine, HEARTBEAT)
    }

    pub fn with_heartbeat(engine: Engine, heartbeat: Duration) -> Arc<Self> {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let (shutdown, _) = watch::channel(false);
        Arc::new(Self {
            engine: Arc::new(engine),
            events,
            ingest_order: Arc::new(Mutex::new(0)),
            dropped: AtomicU64::new(0),
            heartbeat,
            shutdown,
        })
    }

    /// Ends every open `/events` stream.
    pub fn close_streams(&self) {
        let _ = self.shutdown.send(true);
    }

    pub fn dropped_events(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/tree", get(tree))
        .route("/schema", get(schema))
        .route("/openapi.json", get(openapi))
        .route("/stats", get(stats))
        .route("/phase", post(phase))
        .route("/baseline", post(baseline))
        .route("/reset", post(reset))
        .route("/events", get(events))
        .route("/diff", get(diff))
        .layer(DefaultBodyLimit::max(MAX_INGEST_BYTES))
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    phase: Option<Phase>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            phase: None,
        }
    }

    fn engine(e: Error, phase: Phase) -> Self {
        let status = match &e {
            Error::Phase { .. } => StatusCode::CONFLICT,
            Error::InsufficientData(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::UnknownVersion(_) => StatusCode::NOT_FOUND,
            Error::MalformedUrl { .. }
            | Error::Format { .. }
            | Error::Json(_)
            | Error::Config(_) => StatusCode::BAD_REQUEST,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
            phase: Some(phase),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message, "phase": self.phase });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestResponse {
    pub ingested: usize,
    pub learned: usize,
    pub anomalous: usize,
    pub outcomes: Vec<IngestOutcome>,
}

/// Parses every line before touching the engine, so a bad batch is rejected
/// whole.
fn parse_batch(body: &[u8]) -> ApiResult<Vec<RawRequest>> {
    let text = std::str::from_utf8(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            RawRequest::from_json_line(l)
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

async fn ingest(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<IngestResponse>> {
    let batch = parse_batch(&body)?;
    let mut seq = st.ingest_order.clone().lock_owned().await;
    let st2 = st.clone();
    let resp = blocking(move || {
        let mut resp = IngestResponse {
            ingested: batch.len(),
            learned: 0,
            anomalous: 0,
            outcomes: Vec::with_capacity(batch.len()),
        };
        for raw in &batch {
            let out = st2.engine.ingest(raw);
            match out.verdict() {
                None => resp.learned += 1,
                Some(v) if v.is_anomalous() => {
                    resp.anomalous += 1;
                    *seq += 1;
                    // no subscribers is not an error
                    let _ = st2.events.send(AnomalyEvent {
                        seq: *seq,
                        method: raw.method.clone(),
                        url: raw.url.clone(),
                        verdict: v.clone(),
                    });
                }
                Some(_) => {}
            }
            resp.outcomes.push(out);
        }
        resp
    })
    .await?;
    Ok(Json(resp))
}

async fn tree(State(st): State<Arc<AppState>>) -> impl IntoResponse {
    Json(st.engine.tree_snapshot())
}

#[derive(Debug, Deserialize)]
pub struct VersionQuery {
    pub version: Option<u64>,
}

async fn schema(
    State(st): State<Arc<AppState>>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<Response> {
    let phase = st.engine.phase();
    let schema = match q.version {
        Some(v) => st
            .engine
            .schema_version(v)
            .map_err(|e| ApiError::engine(e, phase))?,
        None => st.engine.schema().ok_or_else(|| ApiError {
            status: StatusCode::CONFLICT,
            message: "no schema yet: run a baseline first".into(),
            phase: Some(phase),
        })?,
    };
    Ok(Json(schema.view()).into_response())
}

async fn openapi(State(st): State<Arc<AppState>>) -> ApiResult<Response> {
    let phase = st.engine.phase();
    let doc = st.engine.openapi().map_err(|_| ApiError {
        status: StatusCode::CONFLICT,
        message: format!("no OpenAPI document in phase {phase}: run a baseline first"),
        phase: Some(phase),
    })?;
    Ok(Json(doc).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsResponse {
    #[serde(flatten)]
    pub engine: EngineStats,
    pub events_dropped: u64,
    pub subscribers: usize,
}

async fn stats(State(st): State<Arc<AppState>>) -> Json<StatsResponse> {
    Json(StatsResponse {
        engine: st.engine.stats(),
        events_dropped: st.dropped_events(),
        subscribers: st.events.receiver_count(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PhaseRequest {
    pub target: Phase,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PhaseResponse {
    pub phase: Phase,
}

async fn phase(
    State(st): State<Arc<AppState>>,
    Json(req): Json<PhaseRequest>,
) -> ApiResult<Json<PhaseResponse>> {
    let engine = st.engine.clone();
    let before = engine.phase();
    let phase = blocking(move || engine.set_phase(req.target))
        .await?
        .map_err(|e| ApiError::engine(e, before))?;
    Ok(Json(PhaseResponse { phase }))
}

async fn baseline(State(st): State<Arc<AppState>>) -> ApiResult<Response> {
    let engine = st.engine.clone();
    let before = engine.phase();
    let report = blocking(move || engine.baseline())
        .await?
        .map_err(|e| ApiError::engine(e, before))?;
    Ok(Json(report).into_response())
}

async fn reset(State(st): State<Arc<AppState>>) -> ApiResult<Json<PhaseResponse>> {
    let engine = st.engine.clone();
    blocking(move || engine.reset()).await?;
    Ok(Json(PhaseResponse {
        phase: st.engine.phase(),
    }))
}

struct Subscriber {
    state: Arc<AppState>,
    rx: broadcast::Receiver<AnomalyEvent>,
    shutdown: watch::Receiver<bool>,
    ticker: tokio::time::Interval,
}

fn line(l: &StreamLine) -> Bytes {
    let mut s = serde_json::to_vec(l).expect("event serializes");
    s.push(b'\n');
    Bytes::from(s)
}

async fn events(State(st): State<Arc<AppState>>) -> Response {
    let mut ticker =
        tokio::time::interval_at(tokio::time::Instant::now() + st.heartbeat, st.heartbeat);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let sub = Subscriber {
        rx: st.events.subscribe(),
        shutdown: st.shutdown.subscribe(),
        state: st,
        ticker,
    };
    let stream = futures::stream::unfold(sub, |mut sub| async move {
        loop {
            if *sub.shutdown.borrow() {
                return None;
            }
            tokio::select! {
                r = sub.rx.recv() => match r {
                    Ok(ev) => return Some((Ok::<_, std::io::Error>(line(&StreamLine::Anomaly(ev))), sub)),
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        sub.state.dropped.fetch_add(n, Ordering::Relaxed);
                    }
                    Err(broadcast::error::RecvError::Closed) => return None,
                },
                _ = sub.ticker.tick() => return Some((Ok(line(&StreamLine::Heartbeat)), sub)),
                _ = sub.shutdown.changed() => return None,
            }
        }
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static headers are valid")
}

#[derive(Debug, Deserialize)]
pub struct DiffQuery {
    pub from: u64,
    pub to: u64,
    pub format: Option<String>,
}

async fn diff(State(st): State<Arc<AppState>>, Query(q): Query<DiffQuery>) -> ApiResult<Response> {
    let d = st
        .engine
        .diff(q.from, q.to)
        .map_err(|e| ApiError::engine(e, st.engine.phase()))?;
    Ok(match q.format.as_deref() {
        Some("text") => d.to_text().into_response(),
        _ => Json(d).into_response(),
    })
}

/// Binds `addr` and serves until `shutdown` resolves, then closes event
/// streams and drains in-flight requests.
pub async fn serve(
    state: Arc<AppState>,
    addr: std::net::SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let st = state.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async move {
            shutdown.await;
            st.close_streams();
        })
        .await
}
