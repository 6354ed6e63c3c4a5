//! Edge-node service: the operator HTTP API over a live edge node, driven
//! either by the simulator on a scaled clock or by real gateways.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sinet_core::controller::{ControlError, ControlMode};
use sinet_core::edge::{EdgeError, EdgeNode, GreenhouseStatus, Series, SeriesMetric, StatusSnapshot, TimeSeriesStore};
use sinet_core::metrics::{self, ComparisonReport, RunSummary, SummaryOptions};
use sinet_core::netsim::Simulation;
use sinet_core::{GreenhouseId, MoistureBand, MoistureSample, ScenarioConfig, SimTime, ValveAction, ValveCommand};
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tower_http::cors::CorsLayer;
use tracing::{info, warn};

use crate::batch::comparison_pair;

const CLOCK_PERIOD: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub config: ScenarioConfig,
    pub listen: SocketAddr,
    pub time_scale: f64,
    pub warm_up: SimTime,
    /// `None` keeps the store in memory.
    pub store: Option<PathBuf>,
    /// Accept gateway connections instead of simulating devices.
    pub gateway_listen: Option<SocketAddr>,
}

enum Driver {
    Simulated(Box<Simulation>),
    Devices(broadcast::Sender<ValveCommand>),
}

struct Shared {
    config: ScenarioConfig,
    edge: EdgeNode,
    driver: Driver,
    time_scale: f64,
    warm_up: SimTime,
}

impl Shared {
    fn now(&self) -> SimTime {
        match &self.driver {
            Driver::Simulated(sim) => sim.now().max(self.edge.clock()),
            Driver::Devices(_) => self.edge.clock(),
        }
    }

    /// Device mode has no simulator to drain the outbox; commands go to the
    /// connected gateways directly.
    fn dispatch(&mut self) {
        if let Driver::Devices(tx) = &self.driver {
            for cmd in self.edge.take_outbox() {
                // No connected gateway is not an error.
                let _ = tx.send(cmd);
            }
        }
    }
}

/// Handle shared by the HTTP handlers, the clock and gateway connections.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Mutex<Shared>>,
}

impl AppState {
    pub fn new(opts: &ServeOptions) -> Result<Self> {
        let store = match &opts.store {
            Some(path) => {
                let store = TimeSeriesStore::open(path).with_context(|| format!("opening store {}", path.display()))?;
                if !store.is_empty() {
                    warn!(records = store.len(), path = %path.display(), "replayed existing store");
                }
                store
            }
            None => TimeSeriesStore::in_memory(),
        };
        let edge = EdgeNode::new(&opts.config, store)?;
        let driver = if opts.gateway_listen.is_some() {
            Driver::Devices(broadcast::channel(256).0)
        } else {
            Driver::Simulated(Box::new(Simulation::new(opts.config.clone())?))
        };
        Ok(AppState {
            inner: Arc::new(Mutex::new(Shared {
                config: opts.config.clone(),
                edge,
                driver,
                time_scale: opts.time_scale,
                warm_up: opts.warm_up,
            })),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Moves simulated time forward to `t`: steps the simulator, or just the
    /// edge clock when devices are real.
    pub fn advance_to(&self, t: SimTime) {
        let mut guard = self.lock();
        let shared = &mut *guard;
        match &mut shared.driver {
            Driver::Simulated(sim) => sim.step_until(t, &mut shared.edge),
            Driver::Devices(_) => shared.edge.advance_clock(t),
        }
    }

    pub fn now(&self) -> SimTime {
        self.lock().now()
    }

    pub fn flush(&self) -> std::io::Result<u64> {
        let mut shared = self.lock();
        shared.edge.flush()?;
        Ok(shared.edge.store().len())
    }

    /// Ingests a sample received from a gateway.
    pub fn ingest_device(&self, sample: MoistureSample) -> Result<(), EdgeError> {
        let mut shared = self.lock();
        let at = shared.edge.clock().max(sample.sampled_at);
        shared.edge.advance_clock(at);
        let res = shared.edge.ingest(sample);
        shared.dispatch();
        res
    }

    pub fn subscribe_commands(&self) -> Option<broadcast::Receiver<ValveCommand>> {
        match &self.lock().driver {
            Driver::Devices(tx) => Some(tx.subscribe()),
            Driver::Simulated(_) => None,
        }
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<EdgeError> for ApiError {
    fn from(e: EdgeError) -> Self {
        let status = match &e {
            EdgeError::UnknownGreenhouse(_) => StatusCode::NOT_FOUND,
            EdgeError::Band(_) | EdgeError::InvertedRange { .. } => StatusCode::BAD_REQUEST,
            EdgeError::Control(ControlError::ModeConflict(_) | ControlError::ManualMode(_)) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    #[serde(flatten)]
    pub snapshot: StatusSnapshot,
    pub sim_time: SimTime,
    pub duration: SimTime,
    pub time_scale: f64,
    pub simulated_devices: bool,
}

#[derive(Debug, Deserialize)]
pub struct SeriesQuery {
    pub metric: Option<String>,
    /// Seconds.
    pub from: Option<f64>,
    pub to: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModeRequest {
    pub mode: ControlMode,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValveRequest {
    pub action: ValveAction,
}

#[derive(Debug, Deserialize)]
pub struct SummaryQuery {
    pub warm_up: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct SummaryResponse {
    pub at: SimTime,
    pub warm_up: SimTime,
    pub summary: RunSummary,
    pub comparison: Option<ComparisonReport>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/greenhouses/{id}/series", get(series))
        .route("/greenhouses/{id}/band", put(set_band))
        .route("/greenhouses/{id}/mode", put(set_mode))
        .route("/greenhouses/{id}/valve", post(manual_valve))
        .route("/metrics/summary", get(summary))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn status(State(state): State<AppState>) -> Json<StatusResponse> {
    let shared = state.lock();
    Json(StatusResponse {
        snapshot: shared.edge.live_status(),
        sim_time: shared.now(),
        duration: shared.config.duration_time(),
        time_scale: shared.time_scale,
        simulated_devices: matches!(shared.driver, Driver::Simulated(_)),
    })
}

fn greenhouse_status(shared: &Shared, id: GreenhouseId) -> Result<GreenhouseStatus, ApiError> {
    shared
        .edge
        .live_status()
        .greenhouses
        .into_iter()
        .find(|g| g.id == id)
        .ok_or_else(|| EdgeError::UnknownGreenhouse(id).into())
}

fn secs(value: Option<f64>, default: SimTime, name: &str) -> Result<SimTime, ApiError> {
    match value {
        None => Ok(default),
        Some(v) if v.is_finite() && v >= 0.0 => Ok(SimTime::from_secs_f64(v)),
        Some(v) => Err(ApiError(StatusCode::BAD_REQUEST, format!("{name} must be a non-negative number of seconds, got {v}"))),
    }
}

async fn series(
    State(state): State<AppState>,
    Path(id): Path<u16>,
    Query(q): Query<SeriesQuery>,
) -> Result<Json<Series>, ApiError> {
    let metric = match q.metric.as_deref().unwrap_or("moisture") {
        "moisture" => SeriesMetric::Moisture,
        "valve" => SeriesMetric::Valve,
        "commands" => SeriesMetric::Commands,
        other => {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                format!("unknown metric {other:?}; expected moisture, valve or commands"),
            ))
        }
    };
    let shared = state.lock();
    let from = secs(q.from, SimTime::ZERO, "from")?;
    let to = secs(q.to, shared.now().max(from), "to")?;
    Ok(Json(shared.edge.query_series(GreenhouseId(id), from, to, metric)?))
}

async fn set_band(
    State(state): State<AppState>,
    Path(id): Path<u16>,
    Json(band): Json<MoistureBand>,
) -> Result<Json<GreenhouseStatus>, ApiError> {
    let mut shared = state.lock();
    shared.edge.set_band(GreenhouseId(id), band)?;
    shared.dispatch();
    info!(greenhouse = id, low = band.low_lim, high = band.upper_lim, "band changed");
    Ok(Json(greenhouse_status(&shared, GreenhouseId(id))?))
}

async fn set_mode(
    State(state): State<AppState>,
    Path(id): Path<u16>,
    Json(req): Json<ModeRequest>,
) -> Result<Json<GreenhouseStatus>, ApiError> {
    let mut shared = state.lock();
    shared.edge.set_mode(GreenhouseId(id), req.mode)?;
    shared.dispatch();
    info!(greenhouse = id, mode = ?req.mode, "mode changed");
    Ok(Json(greenhouse_status(&shared, GreenhouseId(id))?))
}

async fn manual_valve(
    State(state): State<AppState>,
    Path(id): Path<u16>,
    Json(req): Json<ValveRequest>,
) -> Result<Json<GreenhouseStatus>, ApiError> {
    let mut shared = state.lock();
    shared.edge.manual_valve(GreenhouseId(id), req.action)?;
    shared.dispatch();
    info!(greenhouse = id, action = req.action.as_str(), "manual valve command");
    Ok(Json(greenhouse_status(&shared, GreenhouseId(id))?))
}

async fn summary(State(state): State<AppState>, Query(q): Query<SummaryQuery>) -> Result<Json<SummaryResponse>, ApiError> {
    let shared = state.lock();
    let Driver::Simulated(sim) = &shared.driver else {
        return Err(ApiError(
            StatusCode::CONFLICT,
            "summaries need the simulated run log; not available with real gateways".into(),
        ));
    };
    let now = sim.now();
    if now == SimTime::ZERO {
        return Err(ApiError(StatusCode::CONFLICT, "no simulated time has elapsed yet".into()));
    }
    let requested = q.warm_up.map_or(shared.warm_up, SimTime::from_secs);
    let warm_up = if requested < now { requested } else { SimTime::ZERO };
    let opts = SummaryOptions {
        warm_up,
        ..SummaryOptions::default()
    };
    let summary = metrics::summarize_window(sim.log(), &shared.config, &opts, now)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let comparison = comparison_pair(&shared.config).and_then(|(a, b)| {
        metrics::compare(summary.greenhouse(a)?, summary.greenhouse(b)?).ok()
    });
    Ok(Json(SummaryResponse {
        at: now,
        warm_up,
        summary,
        comparison,
    }))
}

/// Advances simulated time at `time_scale` simulated seconds per second.
pub async fn run_clock(state: AppState) {
    let (start_wall, start_sim, scale) = {
        let shared = state.lock();
        (Instant::now(), shared.now(), shared.time_scale)
    };
    let mut tick = tokio::time::interval(CLOCK_PERIOD);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tick.tick().await;
        let target = start_sim + SimTime::from_secs_f64(start_wall.elapsed().as_secs_f64() * scale);
        let state = state.clone();
        // Stepping can take a while at large scales; keep it off the reactor.
        if tokio::task::spawn_blocking(move || state.advance_to(target)).await.is_err() {
            return;
        }
    }
}

/// Runs the service until `shutdown` resolves, then flushes the store.
pub async fn serve(opts: ServeOptions, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<()> {
    let listener = TcpListener::bind(opts.listen)
        .await
        .with_context(|| format!("cannot listen on {}", opts.listen))?;
    let gateways = match opts.gateway_listen {
        Some(addr) => Some(
            TcpListener::bind(addr)
                .await
                .with_context(|| format!("cannot listen for gateways on {addr}"))?,
        ),
        None => None,
    };
    let state = AppState::new(&opts)?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    if let Some(gw) = &gateways {
        println!("gateways on {}", gw.local_addr()?);
    }
    info!(%addr, time_scale = opts.time_scale, "edge node serving");

    let clock = tokio::spawn(run_clock(state.clone()));
    let gateway_task = gateways.map(|l| tokio::spawn(crate::gateway::accept(l, state.clone())));
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await
        .context("serving the API")?;
    clock.abort();
    if let Some(t) = gateway_task {
        t.abort();
    }
    let records = state.flush().context("flushing the store")?;
    println!("store flushed ({records} records), shutting down");
    Ok(())
}
