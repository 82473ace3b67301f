//! Read-only JSON API under `/api`.
//!
//! Every request opens its own read-only connection, so the API never holds
//! state shared with the analysis process beyond the database file.

use std::collections::HashMap;
use std::future::Future;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;

use super::config::PlatformConfig;
use crate::store::{Store, StoreError, WarningFilter, DEFAULT_PAGE_SIZE};

const DEFAULT_HOTSPOT_DEPTH: usize = 2;

#[derive(Clone)]
struct ApiState {
    dsn: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::UnknownRepo(_) | StoreError::UnknownTool(_) | StoreError::UnknownSnapshot(_) => {
                StatusCode::NOT_FOUND
            }
            StoreError::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            StoreError::StorageUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn with_store<T, F>(state: &ApiState, f: F) -> ApiResult<T>
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Store) -> Result<T, StoreError> + Send + 'static,
{
    let dsn = state.dsn.clone();
    let out = tokio::task::spawn_blocking(move || {
        let store = Store::open_read_only(&dsn)?;
        f(&store)
    })
    .await
    .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: e.to_string() })??;
    Ok(Json(out))
}

struct Params(HashMap<String, String>);

impl Params {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ApiError> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| ApiError::bad_request(format!("malformed parameter {key}={v:?}"))))
            .transpose()
    }

    fn tool(&self) -> Result<i64, ApiError> {
        self.parse("tool")?.ok_or_else(|| ApiError::bad_request("missing parameter tool"))
    }

    fn snapshot(&self) -> Result<Option<String>, ApiError> {
        match self.get("snapshot") {
            Some(h) if h.len() == 40 && h.bytes().all(|b| b.is_ascii_hexdigit()) => Ok(Some(h.to_ascii_lowercase())),
            Some(h) => Err(ApiError::bad_request(format!("malformed snapshot hash {h:?}"))),
            None => Ok(None),
        }
    }
}

async fn repos(State(st): State<ApiState>) -> ApiResult<impl Serialize> {
    with_store(&st, |s| s.repos()).await
}

async fn tools(State(st): State<ApiState>, Path(id): Path<i64>) -> ApiResult<impl Serialize> {
    with_store(&st, move |s| s.tools_for_repo(id)).await
}

async fn trend(
    State(st): State<ApiState>,
    Path(id): Path<i64>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl Serialize> {
    let tool = Params(q).tool()?;
    with_store(&st, move |s| s.trend_series(id, tool)).await
}

async fn types(
    State(st): State<ApiState>,
    Path(id): Path<i64>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl Serialize> {
    let p = Params(q);
    let (tool, snapshot) = (p.tool()?, p.snapshot()?);
    with_store(&st, move |s| s.type_counts(id, tool, snapshot.as_deref())).await
}

async fn hotspots(
    State(st): State<ApiState>,
    Path(id): Path<i64>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl Serialize> {
    let p = Params(q);
    let (tool, snapshot) = (p.tool()?, p.snapshot()?);
    let depth = p.parse::<usize>("depth")?.unwrap_or(DEFAULT_HOTSPOT_DEPTH);
    if depth == 0 {
        return Err(ApiError::bad_request("depth must be at least 1"));
    }
    with_store(&st, move |s| s.hotspots(id, tool, snapshot.as_deref(), depth)).await
}

async fn warnings(
    State(st): State<ApiState>,
    Path(id): Path<i64>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl Serialize> {
    let p = Params(q);
    let (tool, snapshot) = (p.tool()?, p.snapshot()?);
    let page = p.parse::<u32>("page")?.unwrap_or(1);
    if page == 0 {
        return Err(ApiError::bad_request("page numbers start at 1"));
    }
    let filter = WarningFilter {
        path_prefix: p.get("path_prefix").map(str::to_string),
        severity: p.get("severity").map(str::to_string),
        page,
        page_size: p.parse::<u32>("page_size")?.unwrap_or(DEFAULT_PAGE_SIZE),
    };
    with_store(&st, move |s| s.warnings_page(id, tool, snapshot.as_deref(), &filter)).await
}

async fn not_found() -> ApiError {
    ApiError { status: StatusCode::NOT_FOUND, message: "no such endpoint".into() }
}

/// The dashboard is served from a different origin.
async fn allow_any_origin(req: Request, next: Next) -> Response {
    let mut resp = next.run(req).await;
    resp.headers_mut().insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    resp
}

pub fn router(dsn: impl Into<String>) -> Router {
    Router::new()
        .route("/api/repos", get(repos))
        .route("/api/repos/{id}/tools", get(tools))
        .route("/api/repos/{id}/trend", get(trend))
        .route("/api/repos/{id}/types", get(types))
        .route("/api/repos/{id}/hotspots", get(hotspots))
        .route("/api/repos/{id}/warnings", get(warnings))
        .fallback(not_found)
        .layer(middleware::from_fn(allow_any_origin))
        .with_state(ApiState { dsn: dsn.into() })
}

/// Serve on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    dsn: impl Into<String>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(dsn)).with_graceful_shutdown(shutdown).await
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Blocking entry point: make sure the schema exists, bind `api_bind` and
/// serve until SIGINT/SIGTERM.
pub fn serve_api(config: &PlatformConfig) -> Result<(), ServeError> {
    drop(Store::open(&config.storage_dsn)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.api_bind)
            .await
            .map_err(|source| ServeError::Bind { addr: config.api_bind.clone(), source })?;
        tracing::info!(addr = %listener.local_addr()?, "api listening");
        serve(listener, config.storage_dsn.clone(), shutdown_signal()).await?;
        Ok(())
    })
}

async fn shutdown_signal() {
    use tokio::signal::unix::{signal, SignalKind};
    let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {}
        _ = term.recv() => {}
    }
    tracing::info!("api shutting down");
}

/// A flag that flips to `true` on SIGINT or SIGTERM, for the blocking
/// polling loop. The watcher runs on its own thread.
pub fn shutdown_flag() -> std::io::Result<std::sync::Arc<std::sync::atomic::AtomicBool>> {
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;
    let flag = Arc::new(AtomicBool::new(false));
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    let set = flag.clone();
    std::thread::Builder::new().name("signals".into()).spawn(move || {
        rt.block_on(shutdown_signal());
        set.store(true, Ordering::SeqCst);
    })?;
    Ok(flag)
}
