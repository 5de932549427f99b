use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use viper_core::geometry::Pixel;
use viper_core::servo::{Episode, Estimator, FailureReason, Phase, ServoState};
use viper_core::PressureImage;

use crate::error::ApiError;
use crate::overlay::{png_base64, render_overlay};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    AwaitingClick,
    Running,
    Done,
    Failed,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Done | Status::Failed)
    }
}

/// Snapshot returned by the state endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub id: String,
    pub status: Status,
    pub seed: u64,
    pub estimator: String,
    pub object: String,
    pub frame_counter: u64,
    pub state: ServoState,
    pub success: Option<bool>,
    pub failure: Option<FailureReason>,
    /// Set when the episode loop stopped on an internal error.
    pub error: Option<String>,
}

/// Frame payload: PNG images as base64 plus the state they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameView {
    pub id: String,
    pub status: Status,
    pub frame_counter: u64,
    pub width: u32,
    pub height: u32,
    pub frame_png: String,
    pub overlay_png: String,
    pub state: ServoState,
    pub success: Option<bool>,
}

struct Frame {
    counter: u64,
    image: RgbImage,
    pressure: PressureImage,
    /// Encoded `(frame, overlay)` for `counter`, built on first request.
    encoded: Option<(String, String)>,
}

struct Inner {
    episode: Episode,
    status: Status,
    frame: Frame,
    error: Option<String>,
}

/// One live episode. The episode loop is the only writer once the session is
/// running; readers take the lock briefly and copy a snapshot.
pub struct Session {
    id: String,
    estimator: Estimator,
    object: String,
    inner: Mutex<Inner>,
    cancelled: AtomicBool,
}

impl Session {
    pub fn new(id: String, episode: Episode, estimator: Estimator) -> Result<Self, ApiError> {
        let obs = episode.observe().map_err(|e| ApiError::internal(e.to_string()))?;
        let pressure = estimator.estimate(&obs).map_err(|e| ApiError::internal(e.to_string()))?;
        let object = episode.scene().object.as_ref().map(|o| o.name.clone()).unwrap_or_default();
        Ok(Session {
            id,
            estimator,
            object,
            inner: Mutex::new(Inner {
                episode,
                status: Status::AwaitingClick,
                frame: Frame {
                    counter: 0,
                    image: obs.render.image,
                    pressure,
                    encoded: None,
                },
                error: None,
            }),
            cancelled: AtomicBool::new(false),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // A panic mid-tick leaves a usable episode behind; keep serving it.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn status(&self) -> Status {
        self.lock().status
    }

    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::SeqCst)
    }

    /// Validates and applies the operator's click, moving to RUNNING.
    pub fn click(&self, u: f64, v: f64) -> Result<(), ApiError> {
        let mut inner = self.lock();
        if inner.status != Status::AwaitingClick {
            return Err(ApiError::conflict(
                "wrong_state",
                format!("session is {:?}, clicks are accepted only while awaiting one", inner.status),
            ));
        }
        let (w, h) = (inner.frame.image.width() as f64, inner.frame.image.height() as f64);
        if !(u.is_finite() && v.is_finite() && u >= 0.0 && v >= 0.0 && u < w && v < h) {
            return Err(ApiError::bad_request(
                "out_of_bounds",
                format!("pixel ({u}, {v}) is outside the {w}x{h} image"),
            ));
        }
        inner
            .episode
            .click(Pixel::new(u, v))
            .map_err(|e| ApiError::bad_request("invalid_click", e.to_string()))?;
        inner.status = Status::Running;
        Ok(())
    }

    /// Advances the episode by one control tick. Returns whether the loop
    /// should keep going.
    pub fn tick(&self) -> bool {
        if self.is_cancelled() {
            return false;
        }
        let mut inner = self.lock();
        if inner.status != Status::Running {
            return false;
        }
        if let Err(e) = inner.episode.step(&self.estimator) {
            log::warn!("session {}: episode error: {e}", self.id);
            inner.error = Some(e.to_string());
            inner.status = Status::Failed;
            return false;
        }
        if let Some((image, pressure)) = inner.episode.last_view() {
            let (image, pressure) = (image.clone(), pressure.clone());
            let counter = inner.frame.counter + 1;
            inner.frame = Frame {
                counter,
                image,
                pressure,
                encoded: None,
            };
        }
        if inner.episode.is_finished() {
            inner.status = if inner.episode.success() { Status::Done } else { Status::Failed };
            return false;
        }
        true
    }

    fn success(inner: &Inner) -> Option<bool> {
        inner.status.is_terminal().then(|| inner.episode.success())
    }

    pub fn state_view(&self) -> StateView {
        let inner = self.lock();
        let state = inner.episode.state().clone();
        StateView {
            id: self.id.clone(),
            status: inner.status,
            seed: inner.episode.seed(),
            estimator: self.estimator.name().to_string(),
            object: self.object.clone(),
            frame_counter: inner.frame.counter,
            success: Self::success(&inner),
            failure: state.failure,
            state,
            error: inner.error.clone(),
        }
    }

    pub fn frame_view(&self) -> Result<FrameView, ApiError> {
        let mut inner = self.lock();
        if inner.frame.encoded.is_none() {
            let overlay = render_overlay(&inner.frame.image, &inner.frame.pressure);
            let encode = |img: &RgbImage| png_base64(img).map_err(|e| ApiError::internal(e.to_string()));
            inner.frame.encoded = Some((encode(&inner.frame.image)?, encode(&overlay)?));
        }
        let (frame_png, overlay_png) = inner.frame.encoded.clone().expect("just encoded");
        Ok(FrameView {
            id: self.id.clone(),
            status: inner.status,
            frame_counter: inner.frame.counter,
            width: inner.frame.image.width(),
            height: inner.frame.image.height(),
            frame_png,
            overlay_png,
            state: inner.episode.state().clone(),
            success: Self::success(&inner),
        })
    }

    /// Phase of the underlying controller.
    pub fn phase(&self) -> Phase {
        self.lock().episode.state().phase
    }
}

/// Drives a running session at a fixed period until it finishes or is
/// cancelled. Each tick runs on the blocking pool since a learned estimator
/// does a full network forward pass.
pub async fn run_loop(session: Arc<Session>, period: Duration) {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let s = session.clone();
        match tokio::task::spawn_blocking(move || s.tick()).await {
            Ok(true) => continue,
            Ok(false) => break,
            Err(e) => {
                log::error!("session {}: tick panicked: {e}", session.id());
                break;
            }
        }
    }
}
