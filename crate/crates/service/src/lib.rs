//! HTTP sessions over recorded bias grids: file-swap stepping, live frames,
//! cached metrics and demonstration capture.

mod error;
mod state;

use std::collections::BTreeMap;
use std::io::Cursor;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use biasbench_core::tuner::normalize_frame;
use biasbench_core::{AccumulatedFrame, BiasAction, BiasGrid, BiasSettings};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ApiResult};
pub use state::{load_scenes, AppState, HistoryEntry, Scene, Session};

/// PNG with normalized ON counts in red and OFF counts in blue.
pub fn frame_png(frame: &AccumulatedFrame) -> ApiResult<Vec<u8>> {
    let [on, off] = normalize_frame(frame);
    let img = image::RgbImage::from_fn(frame.width as u32, frame.height as u32, |x, y| {
        let i = y as usize * frame.width as usize + x as usize;
        image::Rgb([(on[i] * 255.0).round() as u8, 0, (off[i] * 255.0).round() as u8])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(out.into_inner())
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ThresholdStart {
    pub diff_off: i32,
    pub diff_on: i32,
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub scene_id: String,
    pub start: ThresholdStart,
}

#[derive(Debug, Deserialize)]
pub struct Adjust {
    pub delta_off: i32,
    pub delta_on: i32,
}

#[derive(Debug, Deserialize)]
pub struct RecordDemo {
    #[serde(default)]
    pub action: Option<BiasAction>,
    #[serde(default)]
    pub mark_optimal: bool,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    pub scene_id: String,
    pub biases: BiasSettings,
    /// Path of the current frame; the query changes with every step.
    pub frame: String,
    pub er: f64,
    pub metrics: Option<BTreeMap<String, f64>>,
    pub history_len: usize,
    pub demo_count: usize,
}

#[derive(Debug, Serialize)]
pub struct MetricsView {
    #[serde(flatten)]
    pub session: SessionView,
    pub window_start: u64,
    pub window_length: u64,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Serialize)]
pub struct SceneView {
    pub scene_id: String,
    pub grid: BiasGrid,
    pub entries: usize,
    pub metrics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct DemoCount {
    pub demo_count: usize,
}

fn view(s: &Session) -> SessionView {
    SessionView {
        id: s.id.to_string(),
        scene_id: s.scene_id.clone(),
        biases: s.biases(),
        frame: format!("/api/sessions/{}/frame.png?step={}", s.id, s.history.len() - 1),
        er: s.window_er(),
        metrics: s.cached_metrics(),
        history_len: s.history.len(),
        demo_count: s.demo_count,
    }
}

type Shared = Arc<AppState>;

/// Runs `f` on the locked session off the async workers, so requests on
/// one session are applied one at a time.
async fn with_session<T: Send + 'static>(
    state: &Shared,
    id: &str,
    f: impl FnOnce(&AppState, &mut Session) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let handle = state.session(id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = handle
            .lock()
            .map_err(|_| ApiError::Internal("session poisoned".into()))?;
        f(&state, &mut s)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn create_session(State(state): State<Shared>, Json(req): Json<CreateSession>) -> ApiResult<Json<SessionView>> {
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let start = BiasSettings::thresholds(req.start.diff_off, req.start.diff_on);
        let handle = st.create_session(&req.scene_id, start)?;
        let s = handle
            .lock()
            .map_err(|_| ApiError::Internal("session poisoned".into()))?;
        Ok(Json(view(&s)))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn adjust(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<Adjust>,
) -> ApiResult<Json<SessionView>> {
    with_session(&state, &id, move |_, s| {
        s.adjust(BiasAction::new(req.delta_off, req.delta_on))?;
        Ok(Json(view(s)))
    })
    .await
}

async fn frame(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let png = with_session(&state, &id, |_, s| frame_png(&s.obs.frame)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], png))
}

async fn metrics(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<MetricsView>> {
    with_session(&state, &id, |_, s| {
        Ok(Json(MetricsView {
            session: view(s),
            window_start: s.obs.frame.window_start,
            window_length: s.obs.frame.window_length,
            history: s.history.clone(),
        }))
    })
    .await
}

async fn record_demo(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<RecordDemo>,
) -> ApiResult<Json<DemoCount>> {
    state.session(&id)?;
    let action = match (req.action, req.mark_optimal) {
        (Some(a), false) => a,
        (None, true) => BiasAction::ZERO,
        (Some(_), true) => return Err(ApiError::BadRequest("give either action or mark_optimal, not both".into())),
        (None, false) => return Err(ApiError::BadRequest("missing action or mark_optimal".into())),
    };
    with_session(&state, &id, move |st, s| {
        Ok(Json(DemoCount {
            demo_count: st.record_demo(s, action)?,
        }))
    })
    .await
}

async fn export(State(state): State<Shared>) -> ApiResult<impl IntoResponse> {
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], state.export()?))
}

async fn scenes(State(state): State<Shared>) -> Json<Vec<SceneView>> {
    Json(
        state
            .scenes
            .iter()
            .map(|(id, s)| {
                let mut metrics: Vec<String> = s
                    .manifest
                    .entries
                    .iter()
                    .flat_map(|e| e.metrics.iter().flat_map(|m| m.keys().cloned()))
                    .collect();
                metrics.sort();
                metrics.dedup();
                SceneView {
                    scene_id: id.clone(),
                    grid: s.manifest.grid.clone(),
                    entries: s.manifest.entries.len(),
                    metrics,
                }
            })
            .collect(),
    )
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/scenes", get(scenes))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/adjust", post(adjust))
        .route("/api/sessions/{id}/frame.png", get(frame))
        .route("/api/sessions/{id}/metrics", get(metrics))
        .route("/api/sessions/{id}/demos", post(record_demo))
        .route("/api/demos/export", get(export))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
