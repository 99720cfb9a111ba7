//! HTTP API over a publish folder and a specimen catalog.
//!
//! | route | |
//! |---|---|
//! | `GET /api/specimens?cancer_type=..&stain=..&biomarker=ER=positive&matched=true&offset=0&limit=50` | search |
//! | `POST /api/specimens` | upsert a record (JSON body) |
//! | `GET /api/specimens/{id}` | one record |
//! | `GET /images/{id}.dzi` | pyramid descriptor |
//! | `GET /images/{id}_files/{level}/{col}_{row}.jpg` | pyramid tile |
//! | `GET /snapshots/{id}.jpg` | published snapshot |
//!
//! File routes return the bytes on disk unchanged with a strong `ETag`
//! (SHA-256 of the body) and honor `If-None-Match`. Errors are JSON
//! objects `{"error": .., "detail": ..}`.

mod query;

use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use sha2::{Digest, Sha256};
use slidepress_core::catalog::{Catalog, CatalogError, SpecimenRecord};
use slidepress_core::deepzoom::{parse_descriptor, TileFormat};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use query::parse_search_query;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub publish_dir: PathBuf,
    pub store_path: PathBuf,
    pub port: u16,
    /// Allowed CORS origin; `None` allows any origin.
    pub cors_origin: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    publish_dir: Arc<PathBuf>,
    catalog: Arc<Catalog>,
}

impl AppState {
    pub fn new(publish_dir: &FsPath, catalog: Arc<Catalog>) -> Self {
        AppState {
            publish_dir: Arc::new(publish_dir.to_path_buf()),
            catalog,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, detail: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            detail: detail.into(),
        }
    }

    fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", detail)
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::SpecimenNotFound(_) => ApiError::not_found(e.to_string()),
            CatalogError::InvalidRecord(_) | CatalogError::InvalidQuery(_) | CatalogError::Csv { .. } => {
                ApiError::bad_request(e.to_string())
            }
            CatalogError::Unavailable(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "store_unavailable", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.kind,
                detail: self.detail,
            }),
        )
            .into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/specimens", get(search).post(upsert))
        .route("/api/specimens/{id}", get(get_specimen))
        .route("/images/{file}", get(descriptor))
        .route("/images/{dir}/{level}/{tile}", get(tile))
        .route("/snapshots/{file}", get(snapshot))
        .with_state(state)
}

pub fn cors_layer(origin: Option<&str>) -> Result<CorsLayer, String> {
    let allow = match origin {
        None | Some("*") => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|e| format!("bad CORS origin {o:?}: {e}"))?),
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::IF_NONE_MATCH])
        .expose_headers([header::ETAG]))
}

/// Bind and serve until the process is stopped.
pub async fn serve(config: ServerConfig) -> Result<(), String> {
    let catalog = Catalog::open(&config.store_path).map_err(|e| e.to_string())?;
    let state = AppState::new(&config.publish_dir, Arc::new(catalog));
    let app = router(state).layer(cors_layer(config.cors_origin.as_deref())?);
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    tracing::info!(%addr, publish_dir = %config.publish_dir.display(), "serving");
    axum::serve(listener, app).await.map_err(|e| e.to_string())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn search(State(state): State<AppState>, RawQuery(raw): RawQuery) -> Result<Response, ApiError> {
    let query = parse_search_query(raw.as_deref().unwrap_or("")).map_err(ApiError::bad_request)?;
    let page = blocking(move || Ok(state.catalog.search(&query)?)).await?;
    Ok(Json(page).into_response())
}

async fn upsert(State(state): State<AppState>, body: axum::body::Bytes) -> Result<Response, ApiError> {
    let record: SpecimenRecord =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid specimen JSON: {e}")))?;
    let stored = blocking(move || {
        state.catalog.upsert(&record)?;
        Ok(record)
    })
    .await?;
    Ok((StatusCode::OK, Json(stored)).into_response())
}

async fn get_specimen(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let lookup = id.clone();
    let record = blocking(move || Ok(state.catalog.get(&lookup)?)).await?;
    match record {
        Some(r) => Ok(Json(r).into_response()),
        None => Err(ApiError::not_found(format!("specimen {id:?} not found"))),
    }
}

/// Identifiers are used as folder names under the publish dir.
fn safe_id(id: &str) -> Option<&str> {
    let ok = !id.is_empty() && !id.starts_with('.') && !id.contains(['/', '\\', '\0']);
    ok.then_some(id)
}

fn published_dir(state: &AppState, id: &str) -> PathBuf {
    state.publish_dir.join(id)
}

async fn descriptor(State(state): State<AppState>, Path(file): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let id = file
        .strip_suffix(".dzi")
        .and_then(safe_id)
        .ok_or_else(|| ApiError::not_found(format!("no image {file:?}")))?;
    let path = published_dir(&state, id).join(format!("{id}.dzi"));
    file_response(&path, "application/xml", &headers).await
}

async fn tile(
    State(state): State<AppState>,
    Path((dir, level, tile)): Path<(String, String, String)>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let missing = || ApiError::not_found(format!("no tile {dir}/{level}/{tile}"));
    let id = dir.strip_suffix("_files").and_then(safe_id).ok_or_else(missing)?;
    let level: u32 = level.parse().map_err(|_| missing())?;
    let (stem, ext) = tile.rsplit_once('.').ok_or_else(missing)?;
    let (col, row) = stem.split_once('_').ok_or_else(missing)?;
    let col: u32 = col.parse().map_err(|_| missing())?;
    let row: u32 = row.parse().map_err(|_| missing())?;
    let base = published_dir(&state, id);
    let text = match tokio::fs::read_to_string(base.join(format!("{id}.dzi"))).await {
        Ok(t) => t,
        Err(_) => return Err(missing()),
    };
    let pyramid = parse_descriptor(&text)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "bad_pyramid", e.to_string()))?;
    if ext != pyramid.format.extension() || pyramid.tile_rect(level, col, row).is_none() {
        return Err(missing());
    }
    let content_type = match pyramid.format {
        TileFormat::Jpg => "image/jpeg",
        TileFormat::Png => "image/png",
    };
    let path = base
        .join(format!("{id}_files"))
        .join(level.to_string())
        .join(pyramid.tile_file_name(col, row));
    file_response(&path, content_type, &headers).await
}

async fn snapshot(State(state): State<AppState>, Path(file): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let id = file
        .strip_suffix(".jpg")
        .and_then(safe_id)
        .ok_or_else(|| ApiError::not_found(format!("no snapshot {file:?}")))?;
    let path = published_dir(&state, id).join(format!("{id}.jpg"));
    file_response(&path, "image/jpeg", &headers).await
}

pub fn etag_for(bytes: &[u8]) -> String {
    format!("\"{}\"", hex::encode(Sha256::digest(bytes)))
}

fn etag_matches(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(str::trim)
        .any(|t| t == "*" || t == etag)
}

async fn file_response(path: &FsPath, content_type: &'static str, headers: &HeaderMap) -> Result<Response, ApiError> {
    let bytes = match tokio::fs::read(path).await {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ApiError::not_found(format!(
                "{} not published",
                path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
            )))
        }
        Err(e) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string())),
    };
    let etag = etag_for(&bytes);
    let etag_value = HeaderValue::from_str(&etag).expect("hex etag is a valid header");
    if etag_matches(headers, &etag) {
        return Ok(Response::builder()
            .status(StatusCode::NOT_MODIFIED)
            .header(header::ETAG, etag_value)
            .body(Body::empty())
            .expect("static response"));
    }
    Ok(Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, content_type)
        .header(header::ETAG, etag_value)
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from(bytes))
        .expect("static response"))
}
