//! HTTP front end over the trained models.
//!
//! `POST /api/v1/{detect,severity,gradcam,translate}` take a multipart form
//! with one `audio` field holding a WAV file (at most 30 s) and answer with
//! JSON; binary payloads are base64. `GET /healthz` answers `ok`.

pub mod pipeline;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dyslab_core::features::{DETECTOR_SIZE, SPECTROGRAM_SIZE};
use dyslab_core::models::{ArchKind, Model, ModelError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const DEFAULT_PORT: u16 = 8080;

/// Request bodies above this are refused outright; the 30 s cap on the
/// decoded audio is the real limit.
pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

/// File names expected under `--model-dir`.
pub const MODEL_FILES: [(&str, ArchKind); 3] = [
    ("detector.dysw", ArchKind::Detector),
    ("severity.dysw", ArchKind::Severity),
    ("unet.dysw", ArchKind::UNet),
];

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("{}: {source}", path.display())]
    Model { path: PathBuf, source: ModelError },
    #[error("{}: input is {found}×{found}, the service pipeline needs {expected}×{expected}", path.display())]
    Resolution {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad CORS origin {0:?}")]
    CorsOrigin(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
}

/// Immutable after startup; shared by every request.
#[derive(Debug)]
pub struct ServiceState {
    pub detector: Model,
    pub severity: Model,
    pub unet: Model,
    /// Crate version plus a digest of the three weight files.
    pub version: String,
    pub started: SystemTime,
}

impl ServiceState {
    /// Loads and validates `detector.dysw`, `severity.dysw` and `unet.dysw`
    /// (each with its manifest) from `dir`.
    pub fn load(dir: &Path) -> Result<Self, StartupError> {
        let mut digest = Sha256::new();
        let mut models = Vec::with_capacity(3);
        for (file, kind) in MODEL_FILES {
            let path = dir.join(file);
            let model = Model::load(&path, Some(kind)).map_err(|source| StartupError::Model {
                path: path.clone(),
                source,
            })?;
            let expected = if kind == ArchKind::Detector { DETECTOR_SIZE } else { SPECTROGRAM_SIZE };
            let found = *model.graph.input_shape().last().expect("image input");
            if found != expected {
                return Err(StartupError::Resolution { path, expected, found });
            }
            let bytes = std::fs::read(&path).map_err(|source| StartupError::Io {
                path: path.clone(),
                source,
            })?;
            digest.update(&bytes);
            models.push(model);
        }
        let hash: String = digest.finalize()[..4].iter().map(|b| format!("{b:02x}")).collect();
        let unet = models.pop().expect("three models");
        let severity = models.pop().expect("three models");
        let detector = models.pop().expect("three models");
        Ok(Self {
            detector,
            severity,
            unet,
            version: format!("{}+{hash}", env!("CARGO_PKG_VERSION")),
            started: SystemTime::now(),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("audio is {0:.1} s long; the limit is 30 s")]
    TooLong(f64),
    #[error("upload too large")]
    PayloadTooLarge,
    #[error("{0}")]
    Unprocessable(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::TooLong(_) | ApiError::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type Shared = Arc<ServiceState>;

async fn read_audio(form: Result<Multipart, MultipartRejection>) -> Result<Vec<u8>, ApiError> {
    let mut form = form.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let too_big = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::PayloadTooLarge
        } else {
            ApiError::BadRequest(e.body_text())
        }
    };
    while let Some(field) = form.next_field().await.map_err(too_big)? {
        if field.name() == Some("audio") {
            return Ok(field.bytes().await.map_err(too_big)?.to_vec());
        }
    }
    Err(ApiError::BadRequest("missing multipart field \"audio\"".into()))
}

/// Decodes the upload, then runs `work` off the async executor.
async fn run<T, F>(state: Shared, form: Result<Multipart, MultipartRejection>, work: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&ServiceState, &dyslab_core::audio_io::AudioClip) -> Result<T, ApiError> + Send + 'static,
{
    let bytes = read_audio(form).await?;
    tokio::task::spawn_blocking(move || {
        let clip = pipeline::decode_upload(&bytes)?;
        work(&state, &clip)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map(Json)
}

async fn healthz() -> &'static str {
    "ok"
}

async fn detect(
    State(s): State<Shared>,
    form: Result<Multipart, MultipartRejection>,
) -> Result<Json<pipeline::DetectResponse>, ApiError> {
    run(s, form, pipeline::detect).await
}

async fn severity(
    State(s): State<Shared>,
    form: Result<Multipart, MultipartRejection>,
) -> Result<Json<pipeline::SeverityResponse>, ApiError> {
    run(s, form, pipeline::severity).await
}

#[derive(Deserialize)]
struct GradCamQuery {
    class: Option<String>,
}

async fn gradcam(
    State(s): State<Shared>,
    Query(q): Query<GradCamQuery>,
    form: Result<Multipart, MultipartRejection>,
) -> Result<Json<pipeline::GradCamResponse>, ApiError> {
    run(s, form, move |st, clip| pipeline::gradcam(st, clip, q.class.as_deref())).await
}

async fn translate(
    State(s): State<Shared>,
    form: Result<Multipart, MultipartRejection>,
) -> Result<Json<pipeline::TranslateResponse>, ApiError> {
    run(s, form, pipeline::translate).await
}

/// CORS: any origin when `origin` is `None`, otherwise only that one.
pub fn router(state: Shared, origin: Option<&str>) -> Result<Router, StartupError> {
    let allow = match origin {
        None => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|_| StartupError::CorsOrigin(o.to_string()))?),
    };
    let cors = CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST]);
    Ok(Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/detect", post(detect))
        .route("/api/v1/severity", post(severity))
        .route("/api/v1/gradcam", post(gradcam))
        .route("/api/v1/translate", post(translate))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors)
        .with_state(state))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub model_dir: PathBuf,
    pub port: u16,
    pub host: [u8; 4],
    pub cors_origin: Option<String>,
}

impl ServeConfig {
    pub fn new(model_dir: PathBuf) -> Self {
        Self {
            model_dir,
            port: DEFAULT_PORT,
            host: [127, 0, 0, 1],
            cors_origin: None,
        }
    }
}

/// Loads the models, binds, and serves until the process is killed.
/// Everything that can fail at startup fails before the first request.
pub fn serve_blocking(cfg: &ServeConfig) -> Result<(), StartupError> {
    let state = Arc::new(ServiceState::load(&cfg.model_dir)?);
    let app = router(state, cfg.cors_origin.as_deref())?;
    let addr = SocketAddr::from((cfg.host, cfg.port));
    let rt = tokio::runtime::Runtime::new().map_err(|source| StartupError::Bind { addr, source })?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| StartupError::Bind { addr, source })?;
        eprintln!("listening on http://{}", listener.local_addr().unwrap_or(addr));
        axum::serve(listener, app)
            .await
            .map_err(|source| StartupError::Bind { addr, source })
    })
}
