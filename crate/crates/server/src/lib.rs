//! HTTP front of [`QueryService`]: routing, a response cache and JSON
//! serialization. Every answer is computed by the library.

use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use lru::LruCache;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpListener;

use sigaudit_core::api::{parse_query, query_digest, routes, ErrorBody, ErrorCode, ErrorResponse, QueryService, SummaryQuery};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_CACHE_ENTRIES: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("trusted mode serves image crops; refusing to bind {0} (not loopback) without the remote override")]
    RemoteTrusted(SocketAddr),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Trusted mode stays on loopback unless explicitly overridden.
pub fn check_bind(addr: SocketAddr, trusted: bool, allow_remote: bool) -> Result<(), ServeError> {
    if trusted && !addr.ip().is_loopback() && !allow_remote {
        return Err(ServeError::RemoteTrusted(addr));
    }
    Ok(())
}

type Key = (String, String);

/// Serialized responses keyed by (dataset digest, query digest).
pub struct ResponseCache {
    inner: Option<Mutex<LruCache<Key, Bytes>>>,
}

impl ResponseCache {
    /// A capacity of 0 disables caching.
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: NonZeroUsize::new(capacity).map(|c| Mutex::new(LruCache::new(c))),
        }
    }

    fn get(&self, key: &Key) -> Option<Bytes> {
        self.inner.as_ref()?.lock().expect("cache lock").get(key).cloned()
    }

    fn put(&self, key: Key, value: Bytes) {
        if let Some(c) = &self.inner {
            c.lock().expect("cache lock").put(key, value);
        }
    }

    pub fn len(&self) -> usize {
        self.inner.as_ref().map_or(0, |c| c.lock().expect("cache lock").len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct AppState {
    pub service: QueryService,
    pub cache: ResponseCache,
}

type Shared = Arc<AppState>;

/// Builds the router. The patch route exists only when the service was
/// created with a patch source.
pub fn router(service: QueryService, cache_entries: usize) -> Router {
    let trusted = service.trusted();
    let state = Arc::new(AppState {
        service,
        cache: ResponseCache::new(cache_entries),
    });
    router_with_state(state, trusted)
}

pub fn router_with_state(state: Shared, trusted: bool) -> Router {
    let mut r = Router::new()
        .route(routes::INFO, get(info))
        .route(routes::ATTRIBUTES, get(attributes))
        .route(routes::SUMMARY, get(summary_default).post(summary))
        .route(routes::DISTRIBUTION, post(distribution))
        .route(routes::BOXPLOT, post(boxplot))
        .route(routes::COOCCURRENCE, post(cooccurrence))
        .route(routes::NPMI, post(npmi));
    if trusted {
        r = r.route(routes::PATCHES, post(patches));
    }
    r.fallback(not_found).with_state(state)
}

pub async fn serve(listener: TcpListener, app: Router) -> Result<(), ServeError> {
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Binds `addr` and serves `app` on a background task; returns the bound
/// address (useful with port 0).
pub async fn spawn(addr: &str, app: Router) -> Result<(SocketAddr, tokio::task::JoinHandle<Result<(), ServeError>>), ServeError> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    Ok((bound, tokio::spawn(serve(listener, app))))
}

fn json_bytes(body: Bytes, status: StatusCode) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(e: ErrorBody) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let body = serde_json::to_vec(&ErrorResponse { error: e }).expect("error serializes");
    json_bytes(body.into(), status)
}

async fn not_found() -> Response {
    error(ErrorBody::new(ErrorCode::NotFound, "no such endpoint"))
}

async fn info(State(s): State<Shared>) -> Response {
    json_bytes(serde_json::to_vec(s.service.info()).expect("serializes").into(), StatusCode::OK)
}

async fn attributes(State(s): State<Shared>) -> Response {
    json_bytes(serde_json::to_vec(&s.service.attributes()).expect("serializes").into(), StatusCode::OK)
}

/// Parses, consults the cache, and otherwise computes on the blocking pool.
async fn answer<Q, R, F>(s: Shared, endpoint: &'static str, body: &[u8], cache: bool, f: F) -> Response
where
    Q: DeserializeOwned + Serialize + Send + 'static,
    R: Serialize,
    F: FnOnce(&QueryService, &Q) -> Result<R, ErrorBody> + Send + 'static,
{
    let q: Q = match parse_query(body) {
        Ok(q) => q,
        Err(e) => return error(e),
    };
    let key = (s.service.info().dataset_digest.clone(), query_digest(endpoint, &q));
    if cache {
        if let Some(hit) = s.cache.get(&key) {
            return json_bytes(hit, StatusCode::OK);
        }
    }
    let state = s.clone();
    let out = tokio::task::spawn_blocking(move || {
        f(&state.service, &q).map(|r| Bytes::from(serde_json::to_vec(&r).expect("response serializes")))
    })
    .await;
    match out {
        Ok(Ok(bytes)) => {
            if cache {
                s.cache.put(key, bytes.clone());
            }
            json_bytes(bytes, StatusCode::OK)
        }
        Ok(Err(e)) => error(e),
        Err(join) => error(ErrorBody::new(ErrorCode::Internal, format!("query failed: {join}"))),
    }
}

async fn summary_default(State(s): State<Shared>) -> Response {
    let body = serde_json::to_vec(&SummaryQuery::default()).expect("serializes");
    answer(s, "summary", &body, true, |svc, q: &SummaryQuery| svc.summary(q)).await
}

async fn summary(State(s): State<Shared>, body: Bytes) -> Response {
    answer(s, "summary", &body, true, |svc, q: &SummaryQuery| svc.summary(q)).await
}

async fn distribution(State(s): State<Shared>, body: Bytes) -> Response {
    answer(s, "distribution", &body, true, |svc, q| svc.distribution(q)).await
}

async fn boxplot(State(s): State<Shared>, body: Bytes) -> Response {
    answer(s, "boxplot", &body, true, |svc, q| svc.boxplot(q)).await
}

async fn cooccurrence(State(s): State<Shared>, body: Bytes) -> Response {
    answer(s, "cooccurrence", &body, true, |svc, q| svc.cooccurrence(q)).await
}

async fn npmi(State(s): State<Shared>, body: Bytes) -> Response {
    answer(s, "npmi", &body, true, |svc, q| svc.npmi(q)).await
}

async fn patches(State(s): State<Shared>, body: Bytes) -> Response {
    answer(s, "patches", &body, false, |svc, q| svc.patches(q)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_policy() {
        let local: SocketAddr = "127.0.0.1:1".parse().unwrap();
        let any: SocketAddr = "0.0.0.0:1".parse().unwrap();
        assert!(check_bind(local, true, false).is_ok());
        assert!(check_bind(any, false, false).is_ok());
        assert!(check_bind(any, true, false).is_err());
        assert!(check_bind(any, true, true).is_ok());
    }

    #[test]
    fn cache_evicts_least_recent() {
        let c = ResponseCache::new(2);
        let k = |s: &str| (String::from("d"), s.to_string());
        c.put(k("a"), Bytes::from_static(b"1"));
        c.put(k("b"), Bytes::from_static(b"2"));
        assert!(c.get(&k("a")).is_some());
        c.put(k("c"), Bytes::from_static(b"3"));
        assert!(c.get(&k("b")).is_none());
        assert!(c.get(&k("a")).is_some());
        assert!(ResponseCache::new(0).get(&k("a")).is_none());
    }
}
