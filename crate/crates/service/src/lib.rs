//! Session-oriented HTTP API over live grasping episodes.
//!
//! | method | path | purpose |
//! |---|---|---|
//! | POST | `/sessions` | create a session (`{seed?, estimator?, checkpoint?, config?}`) |
//! | POST | `/sessions/{id}/click` | submit the target pixel (`{u, v}`) and start the episode |
//! | GET | `/sessions/{id}/frame` | latest frame and pressure overlay as base64 PNG |
//! | GET | `/sessions/{id}/state` | status and controller state |
//! | DELETE | `/sessions/{id}` | stop and drop a session |
//!
//! Errors are `{code, message}` JSON. State-changing requests honour an
//! `Idempotency-Key` header: a retry with the same key and request replays
//! the first response instead of acting again.

mod error;
mod overlay;
mod session;

pub use error::{ApiError, ErrorBody};
pub use overlay::{png_base64, render_overlay, OVERLAY_MAX_KPA};
pub use session::{FrameView, Session, StateView, Status};

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::CorsLayer;
use viper_core::checkpoint::Checkpoint;
use viper_core::model::ViperNet;
use viper_core::servo::{Episode, EpisodeSetup, Estimator, ServoConfig};
use viper_core::synthworld::{World, WorldConfig};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub world: WorldConfig,
    pub servo: ServoConfig,
    /// Checkpoint used by sessions asking for the learned estimator without
    /// naming one.
    pub checkpoint: Option<PathBuf>,
    /// Scene seeds handed out, in order, to sessions that do not pick one.
    pub seed_pool: Vec<u64>,
    /// Control period of the episode loop.
    pub tick: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            world: WorldConfig::default().with_image_size(64),
            servo: ServoConfig::default(),
            checkpoint: None,
            seed_pool: (1..=100).collect(),
            tick: Duration::from_millis(40),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub seed: Option<u64>,
    /// `ORACLE` (default) or `LEARNED`.
    pub estimator: Option<String>,
    pub checkpoint: Option<PathBuf>,
    /// Field-wise overrides of the service's servo configuration.
    pub config: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub id: String,
    pub status: Status,
    pub seed: u64,
    pub estimator: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickRequest {
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickResponse {
    pub id: String,
    pub status: Status,
}

struct Replay {
    fingerprint: String,
    status: StatusCode,
    body: Value,
}

struct Inner {
    config: ServiceConfig,
    world: Arc<World>,
    default_model: Option<Arc<Checkpoint>>,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    replays: Mutex<HashMap<String, Replay>>,
    next_seed: AtomicU64,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> viper_core::Result<Self> {
        if config.seed_pool.is_empty() {
            return Err(viper_core::Error::Config("seed pool is empty".into()));
        }
        config.servo.validate()?;
        let world = Arc::new(World::new(config.world.clone())?);
        let default_model = match &config.checkpoint {
            Some(path) => Some(Arc::new(load_checkpoint(path, world.config().image_size)?)),
            None => None,
        };
        Ok(AppState(Arc::new(Inner {
            config,
            world,
            default_model,
            sessions: Mutex::new(HashMap::new()),
            replays: Mutex::new(HashMap::new()),
            next_seed: AtomicU64::new(0),
        })))
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        lock(&self.0.sessions).get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    pub fn session_count(&self) -> usize {
        lock(&self.0.sessions).len()
    }

    fn estimator(&self, req: &CreateSessionRequest) -> Result<Estimator, ApiError> {
        let kind = req.estimator.as_deref().unwrap_or("ORACLE").to_ascii_uppercase();
        let ck = match (kind.as_str(), &req.checkpoint) {
            ("ORACLE", None) => return Ok(Estimator::Oracle),
            ("ORACLE", Some(_)) => {
                return Err(ApiError::bad_request(
                    "invalid_request",
                    "a checkpoint only applies to the LEARNED estimator",
                ))
            }
            ("LEARNED", Some(path)) => {
                if !path.is_file() {
                    return Err(ApiError::not_found(
                        "checkpoint_not_found",
                        format!("no checkpoint at {}", path.display()),
                    ));
                }
                Arc::new(
                    load_checkpoint(path, self.0.world.config().image_size)
                        .map_err(|e| ApiError::bad_request("invalid_checkpoint", e.to_string()))?,
                )
            }
            ("LEARNED", None) => self.0.default_model.clone().ok_or_else(|| {
                ApiError::not_found("checkpoint_not_found", "the service was started without a checkpoint")
            })?,
            (other, _) => {
                return Err(ApiError::bad_request(
                    "invalid_estimator",
                    format!("unknown estimator {other:?}; expected ORACLE or LEARNED"),
                ))
            }
        };
        Ok(Estimator::Learned {
            model: Arc::new(ViperNet::clone(&ck.model)),
            binning: ck.binning.clone(),
        })
    }

    fn servo_config(&self, overrides: Option<&Value>) -> Result<ServoConfig, ApiError> {
        let Some(overrides) = overrides else {
            return Ok(self.0.config.servo.clone());
        };
        let Value::Object(fields) = overrides else {
            return Err(ApiError::bad_request("invalid_config", "config must be a JSON object"));
        };
        let mut merged = serde_json::to_value(&self.0.config.servo).map_err(|e| ApiError::internal(e.to_string()))?;
        let base = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in fields {
            if !base.contains_key(k) {
                return Err(ApiError::bad_request("invalid_config", format!("unknown servo setting {k:?}")));
            }
            base.insert(k.clone(), v.clone());
        }
        let config: ServoConfig =
            serde_json::from_value(merged).map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
        config
            .validate()
            .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
        Ok(config)
    }

    fn create(&self, req: CreateSessionRequest) -> Result<CreateSessionResponse, ApiError> {
        let estimator = self.estimator(&req)?;
        let servo = self.servo_config(req.config.as_ref())?;
        let seed = req.seed.unwrap_or_else(|| {
            let pool = &self.0.config.seed_pool;
            pool[(self.0.next_seed.fetch_add(1, Ordering::Relaxed) % pool.len() as u64) as usize]
        });
        let setup = EpisodeSetup::random(&self.0.world, seed)
            .map_err(|e| ApiError::bad_request("invalid_seed", e.to_string()))?;
        let episode = Episode::new(self.0.world.clone(), setup, servo)
            .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let name = estimator.name().to_string();
        let session = Arc::new(Session::new(id.clone(), episode, estimator)?);
        lock(&self.0.sessions).insert(id.clone(), session);
        log::info!("session {id} created (seed {seed}, {name})");
        Ok(CreateSessionResponse {
            id,
            status: Status::AwaitingClick,
            seed,
            estimator: name,
        })
    }

    fn click(&self, id: &str, req: ClickRequest) -> Result<ClickResponse, ApiError> {
        let session = self.session(id)?;
        session.click(req.u, req.v)?;
        tokio::spawn(session::run_loop(session.clone(), self.0.config.tick));
        Ok(ClickResponse {
            id: id.to_string(),
            status: Status::Running,
        })
    }

    fn delete(&self, id: &str) -> Result<(), ApiError> {
        let session = lock(&self.0.sessions)
            .remove(id)
            .ok_or_else(|| ApiError::unknown_session(id))?;
        session.cancel();
        log::info!("session {id} deleted");
        Ok(())
    }

    /// Runs `action` once per idempotency key; retries with the same key and
    /// request get the stored response back.
    fn idempotent<T: Serialize>(
        &self,
        headers: &HeaderMap,
        fingerprint: String,
        success: StatusCode,
        action: impl FnOnce() -> Result<T, ApiError>,
    ) -> Response {
        let key = match headers.get(IDEMPOTENCY_HEADER).map(|v| v.to_str()) {
            None => None,
            Some(Ok(k)) if !k.is_empty() => Some(k.to_string()),
            Some(_) => {
                return ApiError::bad_request("invalid_idempotency_key", "Idempotency-Key must be visible ASCII")
                    .into_response()
            }
        };
        if let Some(key) = &key {
            if let Some(r) = lock(&self.0.replays).get(key) {
                if r.fingerprint != fingerprint {
                    return ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        "idempotency_key_reused",
                        "this Idempotency-Key was already used for a different request",
                    )
                    .into_response();
                }
                return (r.status, Json(r.body.clone())).into_response();
            }
        }
        let (status, body) = match action() {
            Ok(v) => (success, serde_json::to_value(v).unwrap_or(Value::Null)),
            Err(e) => (e.status, serde_json::to_value(e.body()).unwrap_or(Value::Null)),
        };
        if let Some(key) = key {
            if !status.is_server_error() {
                lock(&self.0.replays).insert(
                    key,
                    Replay {
                        fingerprint,
                        status,
                        body: body.clone(),
                    },
                );
            }
        }
        if status == StatusCode::NO_CONTENT {
            return status.into_response();
        }
        (status, Json(body)).into_response()
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn load_checkpoint(path: &Path, image_size: usize) -> viper_core::Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if ck.model.config().image_size != image_size {
        return Err(viper_core::Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!(
                "model expects {}px images, the simulator renders {image_size}px",
                ck.model.config().image_size
            ),
        });
    }
    Ok(ck)
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_json", e.body_text()))
}

async fn create_session(
    State(app): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Response {
    let req = match json_body(body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let fingerprint = format!("POST /sessions {}", serde_json::to_string(&req).unwrap_or_default());
    // Scene setup renders a frame and may load a checkpoint.
    let worker = app.clone();
    tokio::task::spawn_blocking(move || {
        worker.idempotent(&headers, fingerprint, StatusCode::CREATED, || worker.create(req))
    })
    .await
    .unwrap_or_else(|e| ApiError::internal(e.to_string()).into_response())
}

async fn click(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Result<Json<ClickRequest>, JsonRejection>,
) -> Response {
    let req = match json_body(body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let fingerprint = format!("POST /sessions/{id}/click {} {}", req.u, req.v);
    app.idempotent(&headers, fingerprint, StatusCode::ACCEPTED, || app.click(&id, req))
}

async fn frame(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<FrameView>, ApiError> {
    let session = app.session(&id)?;
    tokio::task::spawn_blocking(move || session.frame_view())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

async fn session_state(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<StateView>, ApiError> {
    Ok(Json(app.session(&id)?.state_view()))
}

async fn delete(State(app): State<AppState>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> Response {
    let fingerprint = format!("DELETE /sessions/{id}");
    app.idempotent(&headers, fingerprint, StatusCode::NO_CONTENT, || app.delete(&id))
}

async fn not_found() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/click", post(click))
        .route("/sessions/{id}/frame", get(frame))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}", axum::routing::delete(delete))
        .fallback(not_found)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
