//! HTTP inference service.
//!
//! | method | path         | request                | response                                   |
//! |--------|--------------|------------------------|--------------------------------------------|
//! | GET    | `/meta`      |                        | latent size, image size, labels, ckpt id   |
//! | POST   | `/decode`    | `{"z": [..]}`          | `image/png`                                |
//! | POST   | `/encode`    | PNG body               | `{"z_mean": [..], "z_log_var": [..]}`      |
//! | GET    | `/centroids` |                        | `{name: z}`, 404 without a centroid table  |
//! | POST   | `/morph`     | `{"a", "b", "steps"}`  | `image/png` strip, one cell per step       |
//!
//! Morph endpoints are either latent vectors or subtype names resolved
//! through the centroid table. Errors are JSON `{"error", "field"}`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use bridge_vae::dataset::{label_dictionary, Subtype};
use bridge_vae::latent::{montage, morph, CentroidFile, DEFAULT_MORPH_STEPS};
use bridge_vae::Image;

use crate::Model;

pub const DEFAULT_MAX_BODY_BYTES: usize = 4 << 20;
pub const MAX_MORPH_STEPS: usize = 101;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub checkpoint: PathBuf,
    pub addr: SocketAddr,
    pub centroids: Option<PathBuf>,
    pub max_body_bytes: usize,
}

pub struct AppState {
    pub model: Model,
    pub centroids: Option<CentroidFile>,
}

impl AppState {
    pub fn load(config: &ServiceConfig) -> anyhow::Result<Self> {
        let model = Model::load(&config.checkpoint)
            .with_context(|| format!("loading checkpoint {}", config.checkpoint.display()))?;
        let centroids = match &config.centroids {
            None => None,
            Some(path) => {
                let file = CentroidFile::load(path)
                    .with_context(|| format!("loading centroid table {}", path.display()))?;
                anyhow::ensure!(
                    file.checkpoint_id == model.checkpoint_id,
                    "centroid table {} was computed for checkpoint {}, serving {}",
                    path.display(),
                    file.checkpoint_id,
                    model.checkpoint_id
                );
                Some(file)
            }
        };
        Ok(AppState { model, centroids })
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'static str>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn bad(field: &'static str, error: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: error.into(),
                field: Some(field),
            },
        }
    }

    fn not_found(error: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            body: ErrorBody {
                error: error.into(),
                field: None,
            },
        }
    }

    fn internal(error: impl std::fmt::Display) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                error: error.to_string(),
                field: None,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad("body", format!("invalid JSON request: {e}")))
}

fn check_latent(z: &[f64], latent_dim: usize, field: &'static str) -> ApiResult<()> {
    if z.len() != latent_dim {
        return Err(ApiError::bad(
            field,
            format!(
                "`{field}` has {} values, the model expects {latent_dim}",
                z.len()
            ),
        ));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(ApiError::bad(
            field,
            format!("`{field}[{i}]` is not finite"),
        ));
    }
    Ok(())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

#[derive(Serialize)]
struct Meta {
    latent_dim: usize,
    image_width: usize,
    image_height: usize,
    label_dictionary: BTreeMap<String, u8>,
    checkpoint_id: String,
}

async fn meta(State(state): State<Arc<AppState>>) -> Json<Meta> {
    let p = state.model.vae.profile();
    Json(Meta {
        latent_dim: p.latent_dim,
        image_width: p.image_width,
        image_height: p.image_height,
        label_dictionary: label_dictionary(),
        checkpoint_id: state.model.checkpoint_id.clone(),
    })
}

#[derive(Deserialize)]
struct DecodeRequest {
    z: Vec<f64>,
}

async fn decode(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: DecodeRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        // JSON has no NaN or infinity; a literal like 1e999 is the only way one arrives.
        Err(e) if e.to_string().starts_with("number out of range") => {
            return Err(ApiError::bad(
                "z",
                format!("`z` holds a non-finite value: {e}"),
            ))
        }
        Err(e) => return Err(ApiError::bad("body", format!("invalid JSON request: {e}"))),
    };
    check_latent(&req.z, state.model.vae.latent_dim(), "z")?;
    let bytes =
        blocking(move || state.model.decode_png(&req.z).map_err(ApiError::internal)).await?;
    Ok(png(bytes))
}

#[derive(Serialize)]
struct EncodeResponse {
    z_mean: Vec<f64>,
    z_log_var: Vec<f64>,
}

async fn encode(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<Json<EncodeResponse>> {
    let img = Image::from_png_bytes(&body)
        .map_err(|e| ApiError::bad("body", format!("not a PNG image: {e}")))?;
    let p = state.model.vae.profile();
    if (img.width(), img.height()) != (p.image_width, p.image_height) {
        return Err(ApiError::bad(
            "body",
            format!(
                "image is {}x{}, the model expects {}x{}",
                img.width(),
                img.height(),
                p.image_width,
                p.image_height
            ),
        ));
    }
    blocking(move || {
        let out = state
            .model
            .vae
            .encode(&img.to_tensor())
            .map_err(ApiError::internal)?;
        let to_vec = |t: &bridge_vae::Tensor<f32>| t.data().iter().map(|&v| v as f64).collect();
        Ok(Json(EncodeResponse {
            z_mean: to_vec(&out.z_mean),
            z_log_var: to_vec(&out.z_log_var),
        }))
    })
    .await
}

fn centroid_table(state: &AppState) -> ApiResult<&CentroidFile> {
    state
        .centroids
        .as_ref()
        .ok_or_else(|| ApiError::not_found("no centroid table is loaded"))
}

async fn centroids(
    State(state): State<Arc<AppState>>,
) -> ApiResult<Json<BTreeMap<String, Vec<f64>>>> {
    Ok(Json(centroid_table(&state)?.labels.clone()))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Point(Vec<f64>),
    Subtype(String),
}

#[derive(Deserialize)]
struct MorphRequest {
    a: Endpoint,
    b: Endpoint,
    #[serde(default = "default_steps")]
    steps: usize,
}

fn default_steps() -> usize {
    DEFAULT_MORPH_STEPS
}

fn resolve(state: &AppState, e: Endpoint, field: &'static str) -> ApiResult<Vec<f64>> {
    let z = match e {
        Endpoint::Point(z) => z,
        Endpoint::Subtype(name) => {
            let subtype: Subtype = name
                .parse()
                .map_err(|_| ApiError::bad(field, format!("unknown subtype `{name}`")))?;
            centroid_table(state)?
                .get(subtype)
                .map_err(|_| ApiError::not_found(format!("no centroid for `{name}`")))?
                .to_vec()
        }
    };
    check_latent(&z, state.model.vae.latent_dim(), field)?;
    Ok(z)
}

async fn morph_strip(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: MorphRequest = parse_json(&body)?;
    if !(2..=MAX_MORPH_STEPS).contains(&req.steps) {
        return Err(ApiError::bad(
            "steps",
            format!("steps must be in 2..={MAX_MORPH_STEPS}"),
        ));
    }
    let a = resolve(&state, req.a, "a")?;
    let b = resolve(&state, req.b, "b")?;
    let bytes = blocking(move || {
        let track = morph(&state.model.vae, &a, &b, req.steps).map_err(ApiError::internal)?;
        let strip = montage(&track.frames, 1, track.frames.len(), 1).map_err(ApiError::internal)?;
        strip.to_png_bytes().map_err(ApiError::internal)
    })
    .await?;
    Ok(png(bytes))
}

pub fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/decode", post(decode))
        .route("/encode", post(encode))
        .route("/centroids", get(centroids))
        .route("/morph", post(morph_strip))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

/// Loads the checkpoint, then serves until interrupted.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::load(&config)?);
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .with_context(|| format!("binding {}", config.addr))?;
    tracing::info!(
        addr = %listener.local_addr()?,
        checkpoint = %state.model.checkpoint_id,
        "serving"
    );
    axum::serve(listener, router(state, config.max_body_bytes))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
