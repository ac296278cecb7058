//! HTTP service hosting human-preference sessions. Each session owns a
//! [`SessionHub`] and one background refinement worker.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use camshot_core::geom::Pose4;
use camshot_core::oracle::{HumanOracle, SessionHub, SubmitError};
use camshot_core::refine::{RefineConfig, Refined, Refiner, WaypointTask};
use camshot_core::retrieve::{retrieve_candidates, select_and_sort, DeterministicChooser};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::config::PipelineConfig;
use crate::pipeline::Inputs;
use crate::seeds::stage_seed;

/// Outcome of a finished session worker.
pub type SessionResult = std::result::Result<Refined, String>;

struct Session {
    hub: Arc<SessionHub>,
    result: Arc<Mutex<Option<SessionResult>>>,
}

/// Shared service state.
pub struct AppState {
    cfg: PipelineConfig,
    inputs: Arc<Inputs>,
    /// Retrieved start pose per description index.
    seeds: Vec<(usize, Pose4)>,
    sessions: Mutex<HashMap<u64, Session>>,
    next_id: AtomicU64,
}

impl AppState {
    /// Loads the inputs and retrieves one start pose per description with
    /// the deterministic chooser.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        let inputs = Inputs::load(&cfg)?;
        let seeds = if inputs.descriptions.is_empty() {
            Vec::new()
        } else {
            let frames = inputs.frames(&cfg)?;
            let sets = retrieve_candidates(&inputs.descriptions, &frames, cfg.retrieve.top_k)?;
            let ordered = select_and_sort(&sets, &inputs.descriptions, &mut DeterministicChooser)?;
            ordered.waypoints.iter().map(|w| (w.k, w.pose)).collect()
        };
        Ok(Self::with_seeds(cfg, inputs, seeds))
    }

    pub fn with_seeds(cfg: PipelineConfig, inputs: Inputs, seeds: Vec<(usize, Pose4)>) -> Self {
        AppState {
            cfg,
            inputs: Arc::new(inputs),
            seeds,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    fn fresh_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }

    /// Registers a hub driven by someone else (the CLI refine command).
    pub fn register(&self, hub: Arc<SessionHub>) -> u64 {
        let id = self.fresh_id();
        let session = Session {
            hub,
            result: Arc::new(Mutex::new(None)),
        };
        self.sessions.lock().unwrap().insert(id, session);
        id
    }

    /// Starts a session refining the start pose of description `k` (the
    /// first retrieved one when `None`).
    pub fn start_session(&self, k: Option<usize>) -> Result<u64> {
        let (k, seed) = match k {
            Some(k) => *self
                .seeds
                .iter()
                .find(|s| s.0 == k)
                .with_context(|| format!("no waypoint for description {k}"))?,
            None => *self.seeds.first().context("no waypoints to refine")?,
        };
        let id = self.fresh_id();
        let hub = Arc::new(SessionHub::new(self.cfg.refine.iterations));
        let result = Arc::new(Mutex::new(None));
        let cfg = RefineConfig {
            seed: stage_seed(self.cfg.seed, "session").wrapping_add(id),
            ..self.cfg.refine
        };
        let (inputs, tr) = (Arc::clone(&self.inputs), self.cfg.trust_region);
        let deadline = Duration::from_secs_f64(self.cfg.oracle.deadline_s);
        let (worker_hub, worker_result) = (Arc::clone(&hub), Arc::clone(&result));
        std::thread::spawn(move || {
            let outcome = (|| -> SessionResult {
                let refiner = Refiner::new(&inputs.scene, &inputs.grid, cfg, tr).map_err(|e| e.to_string())?;
                let description = inputs.description(k).map_err(|e| e.to_string())?;
                let task = WaypointTask {
                    seed,
                    description,
                    target: Some(description.d.clone()),
                };
                let mut oracle = HumanOracle::new(Arc::clone(&worker_hub), deadline);
                refiner.refine_pose(&task, &mut oracle).map_err(|f| f.to_string())
            })();
            match &outcome {
                Ok(r) => worker_hub.finish(Some(r.pose), None),
                Err(e) => worker_hub.finish(None, Some(e.clone())),
            }
            *worker_result.lock().unwrap() = Some(outcome);
        });
        self.sessions.lock().unwrap().insert(id, Session { hub, result });
        Ok(id)
    }

    pub fn hub(&self, id: u64) -> Option<Arc<SessionHub>> {
        self.sessions.lock().unwrap().get(&id).map(|s| Arc::clone(&s.hub))
    }

    /// The worker's outcome once the session is done.
    pub fn result(&self, id: u64) -> Option<SessionResult> {
        let sessions = self.sessions.lock().unwrap();
        let r = sessions.get(&id)?.result.lock().unwrap();
        r.clone()
    }

    /// Cancels every waiting worker.
    pub fn close_all(&self) {
        for s in self.sessions.lock().unwrap().values() {
            s.hub.close();
        }
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn unknown_session() -> Response {
    error(StatusCode::NOT_FOUND, "unknown session")
}

#[derive(Deserialize, Default)]
struct NewSession {
    k: Option<usize>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: NewSession = if body.iter().all(u8::is_ascii_whitespace) {
        NewSession::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
        }
    };
    match state.start_session(req.k) {
        Ok(id) => Json(json!({ "id": id })).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, format!("{e:#}")),
    }
}

async fn next(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Response {
    let Some(hub) = state.hub(id) else { return unknown_session() };
    match hub.next() {
        Some(p) => Json(p).into_response(),
        None => Json(json!({ "empty": true })).into_response(),
    }
}

#[derive(Deserialize)]
struct Choice {
    request_id: u64,
    choice: String,
}

async fn choice(State(state): State<Arc<AppState>>, Path(id): Path<u64>, Json(c): Json<Choice>) -> Response {
    let Some(hub) = state.hub(id) else { return unknown_session() };
    match hub.submit(c.request_id, &c.choice) {
        Ok(_) => Json(json!({ "ok": true })).into_response(),
        Err(e) => {
            let status = match e {
                SubmitError::NotFound => StatusCode::NOT_FOUND,
                SubmitError::AlreadyAnswered => StatusCode::CONFLICT,
                SubmitError::Closed => StatusCode::GONE,
                SubmitError::InvalidChoice => StatusCode::BAD_REQUEST,
            };
            error(status, e.to_string())
        }
    }
}

async fn status(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Response {
    let Some(hub) = state.hub(id) else { return unknown_session() };
    Json(hub.status()).into_response()
}

const PLACEHOLDER: &str = "<!doctype html>\n<title>camshot</title>\n<p>No UI bundle configured. Set <code>[serve] ui_dir</code>.\nThe session API lives under <code>/api/session</code>.</p>\n";

pub fn router(state: Arc<AppState>) -> Router {
    let ui: Option<PathBuf> = state.cfg.serve.ui_dir.clone();
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/next", get(next))
        .route("/api/session/{id}/choice", post(choice))
        .route("/api/session/{id}/status", get(status))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// Binds `addr`; a port conflict surfaces here.
pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> Result<()> {
    let app = router(Arc::clone(&state));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    state.close_all();
    Ok(())
}
