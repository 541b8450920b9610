//! Read-only HTTP status service.
//!
//! Every request opens a fresh snapshot of the home, so the service sees
//! committed CLI writes without ever taking the write lock. There is no
//! mutating route.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;

use adas_core::canonical;
use adas_core::certification::AuditPackage;
use adas_core::translog::CertificateStatus;
use adas_core::ContentHash;

use crate::clock::Clock;
use crate::home::EngineHome;

struct AppState {
    home: EngineHome,
    clock: Clock,
}

#[derive(Debug)]
enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        ApiError::Internal(format!("{e:#}"))
    }
}

fn canonical_response(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        let body = canonical::to_canonical_bytes(&serde_json::json!({ "error": msg })).unwrap_or_default();
        canonical_response(status, body)
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: Serialize>(value: &T) -> ApiResult {
    let bytes = canonical::to_canonical_bytes(value).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(canonical_response(StatusCode::OK, bytes))
}

/// Runs blocking file access off the async workers.
async fn blocking<F>(state: Arc<AppState>, f: F) -> ApiResult
where
    F: FnOnce(&AppState) -> ApiResult + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .unwrap_or_else(|e| Err(ApiError::Internal(e.to_string())))
}

fn param(q: &HashMap<String, String>, name: &str) -> Result<Option<u64>, ApiError> {
    q.get(name)
        .map(|v| {
            v.parse::<u64>()
                .map_err(|_| ApiError::BadRequest(format!("{name} must be a non-negative integer")))
        })
        .transpose()
}

fn required(q: &HashMap<String, String>, name: &str) -> Result<u64, ApiError> {
    param(q, name)?.ok_or_else(|| ApiError::BadRequest(format!("missing query parameter {name}")))
}

async fn sth(State(state): State<Arc<AppState>>) -> ApiResult {
    blocking(state, |s| {
        let log = s.home.log()?;
        match log.latest_sth() {
            Some(sth) => ok(sth),
            None => Err(ApiError::NotFound("log is empty".into())),
        }
    })
    .await
}

async fn certificate_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    blocking(state, move |s| {
        let status = s.home.log()?.certificate_status(&id, s.clock.now());
        if status == CertificateStatus::Unknown {
            return Err(ApiError::NotFound(format!("no log entries for certificate {id}")));
        }
        ok(&serde_json::json!({ "certificate_id": id, "status": status }))
    })
    .await
}

async fn certificate(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    blocking(state, move |s| match s.home.log()?.find_certificate(&id) {
        Some(cert) => ok(cert),
        None => Err(ApiError::NotFound(format!("certificate {id} was never issued"))),
    })
    .await
}

async fn entry(State(state): State<Arc<AppState>>, Path(index): Path<String>) -> ApiResult {
    blocking(state, move |s| {
        let index: u64 = index
            .parse()
            .map_err(|_| ApiError::BadRequest("index must be a non-negative integer".into()))?;
        match s.home.log()?.entry(index) {
            Some(e) => ok(e),
            None => Err(ApiError::NotFound(format!("no entry {index}"))),
        }
    })
    .await
}

async fn inclusion(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    blocking(state, move |s| {
        let index = required(&q, "index")?;
        let log = s.home.log()?;
        let size = param(&q, "size")?.unwrap_or_else(|| log.latest_sth().map_or(0, |h| h.tree_size));
        let proof = log
            .prove_inclusion(index, size)
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        ok(&proof)
    })
    .await
}

async fn consistency(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    blocking(state, move |s| {
        let old = required(&q, "old")?;
        let log = s.home.log()?;
        let new = param(&q, "new")?.unwrap_or_else(|| log.latest_sth().map_or(0, |h| h.tree_size));
        let proof = log
            .prove_consistency(old, new)
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        ok(&proof)
    })
    .await
}

async fn package(State(state): State<Arc<AppState>>, Path(hash): Path<String>) -> ApiResult {
    blocking(state, move |s| {
        let hash: ContentHash = hash.parse().map_err(|e: adas_core::hash::InvalidHash| ApiError::BadRequest(e.to_string()))?;
        match s.home.packages().read_typed::<AuditPackage>(&hash) {
            Ok(Some(pkg)) => ok(&pkg),
            Ok(None) => Err(ApiError::NotFound(format!("no audit package {hash}"))),
            Err(e) => Err(ApiError::Internal(e.to_string())),
        }
    })
    .await
}

pub fn router(home: EngineHome, clock: Clock) -> Router {
    let state = Arc::new(AppState { home, clock });
    Router::new()
        .route("/v1/sth", get(sth))
        .route("/v1/certificates/{id}", get(certificate))
        .route("/v1/certificates/{id}/status", get(certificate_status))
        .route("/v1/entries/{index}", get(entry))
        .route("/v1/proofs/inclusion", get(inclusion))
        .route("/v1/proofs/consistency", get(consistency))
        .route("/v1/packages/{hash}", get(package))
        .fallback(|| async { ApiError::NotFound("no such route".into()) })
        .with_state(state)
}

pub async fn serve(home: EngineHome, clock: Clock, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("serving {} on http://{}", home.root().display(), listener.local_addr()?);
    axum::serve(listener, router(home, clock))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
