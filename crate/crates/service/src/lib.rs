//! HTTP session API for interactive mask tuning: upload an image and logits
//! (or detect them), preview masks for `(t, b)`, run inpainting attempts and
//! record accept/reject verdicts.

mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use retouch_core::backends::{wire, BackendSet, DetectorConfig};
use retouch_core::inpaint::MethodKind;
use retouch_core::iqa::QualityModels;
use retouch_core::pipeline::Verdict;

pub use error::ApiError;
pub use session::{Attempt, AttemptStatus, AttemptSummary, DetectionSummary, Session, Suggestion};

/// Request bodies carry base64 images, so the default limit is too small.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<html><head><title>retouch</title></head>\
<body><h1>retouch</h1><p>The session API is served under <code>/api</code>.</p></body></html>\n";

pub struct ServiceConfig {
    pub models: QualityModels,
    pub backends: Option<BackendSet>,
    /// Directory of UI assets served at `/`; a placeholder page otherwise.
    pub static_dir: Option<PathBuf>,
}

struct Shared {
    models: QualityModels,
    backends: Option<BackendSet>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(models: QualityModels, backends: Option<BackendSet>) -> Self {
        Self(Arc::new(Shared {
            models,
            backends,
            sessions: RwLock::new(HashMap::new()),
        }))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.0
            .sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Deserialize)]
struct CreateBody {
    image: String,
    logits: Option<String>,
    prompt: Option<String>,
    box_threshold: Option<f64>,
    text_threshold: Option<f64>,
}

fn detector_config(box_threshold: Option<f64>, text_threshold: Option<f64>) -> DetectorConfig {
    let d = DetectorConfig::default();
    DetectorConfig {
        box_threshold: box_threshold.unwrap_or(d.box_threshold),
        text_threshold: text_threshold.unwrap_or(d.text_threshold),
    }
}

async fn create_session(State(state): State<AppState>, Json(body): Json<CreateBody>) -> Result<Response, ApiError> {
    let shared = state.0.clone();
    let (session, detections) = blocking(move || -> Result<_, ApiError> {
        let image = wire::image_from_b64(&body.image).map_err(|e| ApiError::bad_request(format!("image: {e}")))?;
        let logits = body
            .logits
            .as_deref()
            .map(wire::logits_from_b64)
            .transpose()
            .map_err(|e| ApiError::bad_request(format!("logits: {e}")))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut session = Session::new(id, image, logits)?;
        let mut detections = None;
        if let Some(prompt) = body.prompt.as_deref() {
            let cfg = detector_config(body.box_threshold, body.text_threshold);
            detections = Some(session.detect(prompt, &cfg, shared.backends.as_ref())?);
        }
        Ok((session, detections))
    })
    .await??;
    let id = session.id.clone();
    let mut reply = json!({
        "session_id": id,
        "width": session.image.width(),
        "height": session.image.height(),
        "has_logits": session.logits.is_some(),
    });
    if let Some(d) = detections {
        reply["detections"] = json!(d);
    }
    state
        .0
        .sessions
        .write()
        .expect("session table poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(reply)).into_response())
}

#[derive(Deserialize)]
struct DetectBody {
    prompt: String,
    box_threshold: Option<f64>,
    text_threshold: Option<f64>,
}

async fn detect(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<DetectBody>,
) -> Result<Json<Value>, ApiError> {
    let guard = state.session(&id)?.lock_owned().await;
    let shared = state.0.clone();
    let (guard, result) = blocking(move || {
        let mut guard = guard;
        let cfg = detector_config(body.box_threshold, body.text_threshold);
        let r = guard.detect(&body.prompt, &cfg, shared.backends.as_ref());
        (guard, r)
    })
    .await?;
    let detections = result?;
    Ok(Json(json!({ "detections": detections, "has_logits": guard.logits.is_some() })))
}

#[derive(Deserialize)]
struct MaskBody {
    t: f64,
    b: f64,
}

async fn preview_mask(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<MaskBody>,
) -> Result<Json<Value>, ApiError> {
    let guard = state.session(&id)?.lock_owned().await;
    blocking(move || -> Result<_, ApiError> {
        let mask = guard.mask(body.t, body.b)?;
        Ok(Json(json!({
            "mask": wire::mask_to_b64(&mask)?,
            "area": mask.area(),
            "coverage": mask.coverage(),
            "width": mask.width(),
            "height": mask.height(),
        })))
    })
    .await?
}

#[derive(Deserialize)]
struct InpaintBody {
    t: f64,
    b: f64,
    #[serde(default = "default_method")]
    method: MethodKind,
}

fn default_method() -> MethodKind {
    MethodKind::Auto
}

async fn apply_inpaint(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<InpaintBody>,
) -> Result<Json<Value>, ApiError> {
    let guard = state.session(&id)?.lock_owned().await;
    let shared = state.0.clone();
    blocking(move || -> Result<_, ApiError> {
        let mut guard = guard;
        let input_report = guard.input_report(&shared.models)?;
        let attempt = guard.inpaint(body.t, body.b, body.method, &shared.models, shared.backends.as_ref())?;
        let image = attempt.result.as_ref().expect("successful attempt has an image");
        Ok(Json(json!({
            "attempt": attempt.index,
            "image": wire::image_to_b64(image)?,
            "report": attempt.report,
            "input_report": input_report,
            "mask_area": attempt.mask_area,
            "coverage": attempt.coverage,
            "method": attempt.method,
        })))
    })
    .await?
}

#[derive(Deserialize)]
struct VerdictBody {
    attempt: usize,
    decision: Verdict,
}

async fn verdict(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<VerdictBody>,
) -> Result<Json<Value>, ApiError> {
    let guard = state.session(&id)?.lock_owned().await;
    let shared = state.0.clone();
    blocking(move || -> Result<_, ApiError> {
        let mut guard = guard;
        let suggestion = guard.verdict(body.attempt, body.decision, shared.backends.as_ref())?;
        Ok(Json(match body.decision {
            Verdict::Accept => json!({ "final_attempt": body.attempt, "complete": true }),
            Verdict::Reject => json!({ "complete": false, "suggestion": suggestion }),
        }))
    })
    .await?
}

async fn history(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let guard = state.session(&id)?.lock_owned().await;
    Ok(Json(json!({
        "session_id": guard.id,
        "complete": guard.final_attempt.is_some(),
        "final_attempt": guard.final_attempt,
        "attempts": guard.summaries(),
    })))
}

async fn attempt_image(
    State(state): State<AppState>,
    Path((id, n)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    let guard = state.session(&id)?.lock_owned().await;
    let png = blocking(move || -> Result<_, ApiError> {
        let attempt = guard
            .history
            .iter()
            .find(|a| a.index == n)
            .ok_or_else(|| ApiError::not_found(format!("no attempt {n}")))?;
        let image = attempt
            .result
            .as_ref()
            .ok_or_else(|| ApiError::not_found(format!("attempt {n} has no image")))?;
        Ok(image.encode_png()?)
    })
    .await??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/detect", post(detect))
        .route("/api/session/{id}/mask", post(preview_mask))
        .route("/api/session/{id}/inpaint", post(apply_inpaint))
        .route("/api/session/{id}/verdict", post(verdict))
        .route("/api/session/{id}/history", get(history))
        .route("/api/session/{id}/attempt/{n}/image", get(attempt_image))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(config.models, config.backends);
    let app = router(state, config.static_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}
