//! HTTP preview service under `/v1`.
//!
//! The scene is loaded once in the background; until it is installed every
//! endpoint answers 503. Error bodies are JSON objects with `error` and,
//! when known, `field` and `invariant`.

use std::future::IntoFuture;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::header::{CONTENT_TYPE, HeaderName};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Map, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use reframe_core::camera::RelativeTransform;
use reframe_core::io::{self, CameraFile, FrameEntry};
use reframe_core::warp::SplatMode;

use crate::colorwheel::flow_to_color;
use crate::session::{SceneSession, Target, WarpMode};

pub const HOLE_FRACTION_HEADER: &str = "x-hole-fraction";
pub const RENDER_MS_HEADER: &str = "x-render-ms";

#[derive(Default)]
pub struct ServiceState {
    session: RwLock<Option<Arc<SceneSession>>>,
}

impl ServiceState {
    pub fn loading() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn ready(session: SceneSession) -> Arc<Self> {
        let s = Self::loading();
        s.install(session);
        s
    }

    pub fn install(&self, session: SceneSession) {
        *self.session.write().expect("session lock") = Some(Arc::new(session));
    }

    fn session(&self) -> Result<Arc<SceneSession>, ApiError> {
        self.session
            .read()
            .expect("session lock")
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "scene is loading"))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
    invariant: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            field: None,
            invariant: None,
        }
    }

    fn bad_field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.into()),
            ..Self::new(StatusCode::BAD_REQUEST, message)
        }
    }
}

impl From<reframe_core::Error> for ApiError {
    fn from(e: reframe_core::Error) -> Self {
        use reframe_core::Error as E;
        let message = e.to_string();
        match e {
            E::Schema { field, .. } => Self::bad_field(field, message),
            E::Malformed { .. } => Self::bad_field("body", message),
            E::Invariant { field, invariant } => Self {
                field: Some(field),
                invariant: Some(invariant),
                ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
            },
            E::InvalidInput(_) | E::DimensionMismatch { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, message),
        }
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<reframe_core::Error>() {
            Ok(core) => core.into(),
            Err(e) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.message});
        if let Some(f) = self.field {
            body["field"] = Value::String(f);
        }
        if let Some(i) = self.invariant {
            body["invariant"] = Value::String(i.to_string());
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body(bytes: &[u8]) -> ApiResult<Map<String, Value>> {
    match io::parse_json(bytes, "request body")? {
        Value::Object(m) => Ok(m),
        _ => Err(ApiError::bad_field("body", "expected a JSON object")),
    }
}

fn frame_index(body: &Map<String, Value>, session: &SceneSession) -> ApiResult<usize> {
    let v = body.get("frame").ok_or_else(|| ApiError::bad_field("frame", "missing field"))?;
    let t = v
        .as_u64()
        .ok_or_else(|| ApiError::bad_field("frame", "expected a non-negative integer"))? as usize;
    check_frame(t, session)?;
    Ok(t)
}

fn check_frame(t: usize, session: &SceneSession) -> ApiResult<()> {
    if t >= session.len() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("frame {t} not found (scene has {})", session.len()),
        ));
    }
    Ok(())
}

fn parse_target(body: &Map<String, Value>) -> ApiResult<Target> {
    match (body.get("rel"), body.get("pose")) {
        (Some(r), None) => Ok(Target::Relative(RelativeTransform::new(io::parse_pose_value(r, "rel")?))),
        (None, Some(p)) => Ok(Target::Pose(io::parse_pose_value(p, "pose")?)),
        (Some(_), Some(_)) => Err(ApiError::bad_field("rel", "give either rel or pose, not both")),
        (None, None) => Err(ApiError::bad_field("rel", "missing field (or pose)")),
    }
}

fn png_response(png: Vec<u8>) -> Response {
    ([(CONTENT_TYPE, "image/png")], png).into_response()
}

async fn health(State(state): State<Arc<ServiceState>>) -> ApiResult<Json<Value>> {
    let s = state.session()?;
    Ok(Json(json!({"status": "ok", "session": s.id})))
}

async fn meta(State(state): State<Arc<ServiceState>>) -> ApiResult<Json<Value>> {
    let s = state.session()?;
    let file = CameraFile::from_trajectory(&s.trajectory);
    let k = s.intrinsics();
    Ok(Json(json!({
        "T": s.len(),
        "H": k.height,
        "W": k.width,
        "intrinsics": file.intrinsics,
        "trajectory": file.frames,
        "session": s.id,
    })))
}

async fn frame(State(state): State<Arc<ServiceState>>, Path(t): Path<String>) -> ApiResult<Response> {
    let s = state.session()?;
    let t: usize = t
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("frame `{t}` not found")))?;
    check_frame(t, &s)?;
    Ok(png_response(io::encode_frame_png(&s.frames[t])?))
}

/// Rendered preview: PNG bytes and hole fraction. Shared by the endpoint and
/// tests that compare against the CLI.
pub fn render_preview(s: &SceneSession, body: &Map<String, Value>) -> ApiResult<(Vec<u8>, f64)> {
    let t = frame_index(body, s)?;
    let target = parse_target(body)?;
    let mode = match body.get("mode") {
        None => WarpMode::PerFrame,
        Some(Value::String(m)) => m.parse().map_err(|e: String| ApiError::bad_field("mode", e))?,
        Some(_) => return Err(ApiError::bad_field("mode", "expected a string")),
    };
    let splat = match body.get("splat").and_then(Value::as_str) {
        None | Some("nearest") => SplatMode::Nearest,
        Some("bilinear") => SplatMode::Bilinear,
        Some(other) => return Err(ApiError::bad_field("splat", format!("unknown splat mode `{other}`"))),
    };
    let w = s.preview_with(t, &target, mode, splat)?;
    Ok((io::encode_frame_png(&w.image)?, w.hole_fraction()))
}

async fn preview(State(state): State<Arc<ServiceState>>, body: Bytes) -> ApiResult<Response> {
    let s = state.session()?;
    let start = Instant::now();
    let body = parse_body(&body)?;
    let (png, holes) = tokio::task::spawn_blocking(move || render_preview(&s, &body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let mut resp = png_response(png);
    let h = resp.headers_mut();
    h.insert(HOLE_FRACTION_HEADER, HeaderValue::from_str(&holes.to_string()).expect("decimal"));
    h.insert(RENDER_MS_HEADER, HeaderValue::from_str(&format!("{ms:.3}")).expect("decimal"));
    Ok(resp)
}

fn wants_vis(query: Option<&str>) -> bool {
    query.is_some_and(|q| {
        q.split('&')
            .any(|kv| matches!(kv, "vis=1" | "vis=true" | "vis"))
    })
}

async fn flow(
    State(state): State<Arc<ServiceState>>,
    RawQuery(query): RawQuery,
    body: Bytes,
) -> ApiResult<Response> {
    let s = state.session()?;
    let body = parse_body(&body)?;
    let t = frame_index(&body, &s)?;
    let target = parse_target(&body)?;
    let f = s.flow(t, &target)?;
    if wants_vis(query.as_deref()) {
        Ok(png_response(io::encode_frame_png(&flow_to_color(&f))?))
    } else {
        Ok(([(CONTENT_TYPE, "application/octet-stream")], io::encode_flo(&f)).into_response())
    }
}

/// Validates a trajectory and returns it as a normalized camera file:
/// frames sorted by index, intrinsics filled from the scene when absent.
pub fn normalize_trajectory(s: &SceneSession, bytes: &[u8]) -> ApiResult<Vec<u8>> {
    let body = parse_body(bytes)?;
    let mut file = if body.contains_key("intrinsics") {
        io::decode_camera_json(bytes)?
    } else {
        let frames = body.get("frames").ok_or_else(|| ApiError::bad_field("frames", "missing field"))?;
        let mut file = CameraFile::from_trajectory(&s.trajectory);
        file.frames = io::parse_frames_value(frames, "frames")?;
        file
    };
    let mut seen = vec![false; s.len()];
    for (i, f) in file.frames.iter().enumerate() {
        let field = format!("frames[{i}].index");
        if f.index >= s.len() {
            return Err(ApiError {
                field: Some(field),
                invariant: Some("index < T"),
                ..ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    format!("frame index {} outside scene of {} frames", f.index, s.len()),
                )
            });
        }
        if std::mem::replace(&mut seen[f.index], true) {
            return Err(ApiError {
                field: Some(field),
                invariant: Some("unique index"),
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("frame index {} repeated", f.index))
            });
        }
    }
    file.frames.sort_by_key(|f: &FrameEntry| f.index);
    Ok(io::encode_camera_json(&file))
}

async fn trajectory(State(state): State<Arc<ServiceState>>, body: Bytes) -> ApiResult<Response> {
    let s = state.session()?;
    let out = normalize_trajectory(&s, &body)?;
    Ok(([(CONTENT_TYPE, "application/json")], out).into_response())
}

pub fn router(state: Arc<ServiceState>, allow_origin: Option<HeaderValue>) -> Router {
    let origin = match allow_origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([CONTENT_TYPE])
        .expose_headers([
            HeaderName::from_static(HOLE_FRACTION_HEADER),
            HeaderName::from_static(RENDER_MS_HEADER),
        ]);
    let api = Router::new()
        .route("/health", get(health))
        .route("/meta", get(meta))
        .route("/frames/{t}", get(frame))
        .route("/preview", post(preview))
        .route("/flow", post(flow))
        .route("/trajectory", post(trajectory));
    Router::new().nest("/v1", api).layer(cors).with_state(state)
}

pub async fn serve(scene: PathBuf, host: &str, port: u16, allow_origin: Option<String>) -> anyhow::Result<()> {
    let origin = allow_origin
        .map(|o| HeaderValue::from_str(&o))
        .transpose()
        .map_err(|e| crate::commands::UsageError(format!("--allow-origin: {e}")))?;
    let state = ServiceState::loading();
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    println!("listening on http://{}/v1", listener.local_addr()?);
    let loader = {
        let state = state.clone();
        tokio::task::spawn_blocking(move || -> anyhow::Result<()> {
            state.install(SceneSession::load(&scene)?);
            Ok(())
        })
    };
    let server = axum::serve(listener, router(state, origin)).into_future();
    tokio::pin!(server);
    tokio::select! {
        loaded = loader => {
            loaded??;
            println!("scene loaded");
            server.await?;
        }
        res = &mut server => res?,
    }
    Ok(())
}
