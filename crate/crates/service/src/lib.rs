//! HTTP session service for the interactive loop: upload an image, submit
//! margin points, refine with clicks, undo, accept.
//!
//! Requests to one session are serialized by a per-session lock; compute
//! runs on the blocking pool so `/healthz` stays responsive.

pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};

use interseg_core::io::{decode_image_bytes, encode_mask_png, encode_mask_sgrid};
use interseg_core::pipeline::{PipelineParams, Timing};
use interseg_core::{BoundingBox, Seed};

pub use session::{Point, Session, SessionError, SessionRecord, Status};
pub use store::Store;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TTL_SECS: u64 = 3600;

#[derive(Clone, Debug)]
pub struct Config {
    pub port: u16,
    pub session_dir: Option<PathBuf>,
    pub ttl: Duration,
    pub params: PipelineParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            port: DEFAULT_PORT,
            session_dir: None,
            ttl: Duration::from_secs(DEFAULT_TTL_SECS),
            params: PipelineParams::default(),
        }
    }
}

impl Config {
    /// Defaults overridden by `INTERSEG_PORT`, `INTERSEG_SESSION_DIR` and
    /// `INTERSEG_TTL_SECS`.
    pub fn from_env() -> Result<Self, String> {
        let mut c = Config::default();
        if let Ok(v) = std::env::var("INTERSEG_PORT") {
            c.port = v.parse().map_err(|_| format!("bad INTERSEG_PORT {v:?}"))?;
        }
        if let Ok(v) = std::env::var("INTERSEG_SESSION_DIR") {
            if !v.is_empty() {
                c.session_dir = Some(PathBuf::from(v));
            }
        }
        if let Ok(v) = std::env::var("INTERSEG_TTL_SECS") {
            c.ttl = Duration::from_secs(v.parse().map_err(|_| format!("bad INTERSEG_TTL_SECS {v:?}"))?);
        }
        Ok(c)
    }
}

pub struct AppState {
    pub store: Store,
    pub params: PipelineParams,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::Invalid(inner) if inner.is_io() => StatusCode::INTERNAL_SERVER_ERROR,
            SessionError::Invalid(_) => StatusCode::BAD_REQUEST,
            SessionError::State(_) => StatusCode::CONFLICT,
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<interseg_core::Error> for ApiError {
    fn from(e: interseg_core::Error) -> Self {
        SessionError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        message: format!("invalid JSON: {e}"),
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("worker failed: {e}"),
    })?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub id: String,
    pub status: Status,
    pub rank: usize,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub round: Option<usize>,
    pub bbox: Option<BoundingBox>,
    pub margin_points: Vec<Point>,
    pub click_history: Vec<Vec<Seed>>,
}

fn meta(s: &Session) -> Meta {
    Meta {
        id: s.id.clone(),
        status: s.status(),
        rank: s.image().rank(),
        dims: s.image().dims().to_vec(),
        spacing: s.image().spacing().to_vec(),
        round: s.round(),
        bbox: s.bbox().cloned(),
        margin_points: s.margin_points().to_vec(),
        click_history: s.click_history().to_vec(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskResponse {
    pub id: String,
    pub status: Status,
    pub round: usize,
    pub dims: Vec<usize>,
    pub bbox: Option<BoundingBox>,
    /// Base64 SGRID (u8) of the mask.
    pub mask_sgrid: String,
    /// Base64 PNG overlay, 2D only.
    pub mask_png: Option<String>,
    pub timings: Vec<Timing>,
}

fn mask_response(s: &Session) -> ApiResult<MaskResponse> {
    let round = s.round().expect("mask exists");
    let m = s.mask(None)?;
    let b64 = base64::engine::general_purpose::STANDARD;
    let png = if m.shape().rank() == 2 {
        Some(b64.encode(encode_mask_png(m, None)?))
    } else {
        None
    };
    Ok(MaskResponse {
        id: s.id.clone(),
        status: s.status(),
        round,
        dims: m.dims().to_vec(),
        bbox: s.bbox().cloned(),
        mask_sgrid: b64.encode(encode_mask_sgrid(m, s.image().spacing())),
        mask_png: png,
        timings: s.last_timings().to_vec(),
    })
}

async fn healthz() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Meta>)> {
    let m = blocking(move || {
        let image = decode_image_bytes(&body)?;
        let s = Session::new(uuid::Uuid::new_v4().simple().to_string(), image, app.params.clone());
        let m = meta(&s);
        app.store.insert(s)?;
        Ok(m)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(m)))
}

/// Run a mutation under the session lock, persisting on success.
async fn mutate<T: Send + 'static>(
    app: Arc<AppState>,
    id: String,
    f: impl FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let entry = app.store.get(&id)?;
    let mut guard = entry.session.clone().lock_owned().await;
    blocking(move || {
        let out = f(&mut guard)?;
        app.store.persist(&guard)?;
        Ok(out)
    })
    .await
}

async fn submit_points(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<MaskResponse>> {
    let points: Vec<Point> = parse_json(&body)?;
    let r = mutate(app, id, move |s| {
        s.submit_points(&points)?;
        mask_response(s)
    })
    .await?;
    Ok(Json(r))
}

async fn submit_clicks(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<MaskResponse>> {
    let clicks: Vec<Seed> = parse_json(&body)?;
    let r = mutate(app, id, move |s| {
        s.submit_clicks(&clicks)?;
        mask_response(s)
    })
    .await?;
    Ok(Json(r))
}

async fn undo(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<MaskResponse>> {
    let r = mutate(app, id, |s| {
        s.undo()?;
        mask_response(s)
    })
    .await?;
    Ok(Json(r))
}

async fn accept(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Meta>> {
    let r = mutate(app, id, |s| {
        s.accept()?;
        Ok(meta(s))
    })
    .await?;
    Ok(Json(r))
}

async fn get_meta(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Meta>> {
    let entry = app.store.get(&id)?;
    let s = entry.session.lock().await;
    Ok(Json(meta(&s)))
}

#[derive(Debug, Default, Deserialize)]
pub struct MaskQuery {
    pub round: Option<usize>,
    pub slice: Option<usize>,
    /// `png` or `sgrid`; PNG for 2D or sliced requests by default.
    pub format: Option<String>,
}

async fn get_mask(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MaskQuery>,
) -> ApiResult<Response> {
    let entry = app.store.get(&id)?;
    let s = entry.session.lock().await;
    let m = s.mask(q.round)?;
    let rank = m.shape().rank();
    let format = q
        .format
        .clone()
        .unwrap_or_else(|| if rank == 2 || q.slice.is_some() { "png" } else { "sgrid" }.to_string());
    let (ctype, bytes) = match format.as_str() {
        "png" => ("image/png", encode_mask_png(m, q.slice)?),
        "sgrid" => {
            if q.slice.is_some() {
                return Err(interseg_core::Error::Parameter("slice only applies to png".into()).into());
            }
            ("application/octet-stream", encode_mask_sgrid(m, s.image().spacing()))
        }
        other => return Err(interseg_core::Error::Parameter(format!("unknown format {other:?}")).into()),
    };
    Ok(([(header::CONTENT_TYPE, ctype)], bytes).into_response())
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/points", post(submit_points))
        .route("/sessions/{id}/clicks", post(submit_clicks))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/accept", post(accept))
        .route("/sessions/{id}/mask", get(get_mask))
        .route("/sessions/{id}/meta", get(get_meta))
        .layer(axum::extract::DefaultBodyLimit::max(512 * 1024 * 1024))
        .with_state(app)
}

/// Build the shared state, reloading persisted sessions.
pub fn app_state(config: &Config) -> Arc<AppState> {
    let store = Store::new(config.session_dir.clone(), config.ttl);
    for (name, err) in store.load_all() {
        eprintln!("skipping stored session {name}: {err}");
    }
    Arc::new(AppState {
        store,
        params: config.params.clone(),
    })
}

pub async fn serve(config: Config) -> std::io::Result<()> {
    let app = app_state(&config);
    let sweeper = app.clone();
    let period = config.ttl.min(Duration::from_secs(60)).max(Duration::from_secs(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.store.evict_expired();
        }
    });
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
