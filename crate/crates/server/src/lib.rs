//! REST service around the recommender: dataset upload, sessions, batches
//! and feedback.

mod config;
mod error;
mod store;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pivotrec_core::dataset::{load_table, parse_type_overrides, Dataset, LoadOptions, TypeOverride};
use pivotrec_core::embedding::{BaselineEmbedder, EmbeddingProvider, RemoteEmbedder, RemoteEmbedderConfig};
use pivotrec_core::pivot::PivotSpec;
use pivotrec_core::recommend::{DatasetProfile, RecommendConfig, Session, Verdict};
use pivotrec_core::semantics::{
    CacheError, CacheMode, CachingOracle, RemoteConfig, RemoteOracle, RuleBasedOracle, SemanticOracle,
};
use serde_json::{json, Map, Value};

pub use config::{CacheFileMode, ConfigFileError, ServerConfig};
pub use error::{ApiError, ErrorCode};
pub use store::{StoreError, StoredDataset};

use store::Store;

/// Builds the oracle stack: remote or rule-based, always memoized, optionally
/// backed by a cache file.
pub fn build_oracle(
    remote: Option<&RemoteConfig>,
    cache: Option<(&Path, CacheFileMode)>,
) -> Result<Arc<dyn SemanticOracle>, CacheError> {
    let inner: Arc<dyn SemanticOracle> = match remote {
        Some(cfg) => Arc::new(RemoteOracle::new(cfg)),
        None => Arc::new(RuleBasedOracle),
    };
    let cached = match cache {
        Some((path, mode)) => {
            let mode = match mode {
                CacheFileMode::Record => CacheMode::Record,
                CacheFileMode::Replay => CacheMode::Replay,
            };
            CachingOracle::with_file(inner, path, mode)?
        }
        None => CachingOracle::new(inner),
    };
    Ok(Arc::new(cached))
}

pub fn build_embedder(remote: Option<&RemoteEmbedderConfig>) -> Arc<dyn EmbeddingProvider> {
    match remote {
        Some(cfg) => Arc::new(RemoteEmbedder::new(cfg)),
        None => Arc::new(BaselineEmbedder::default()),
    }
}

/// Parses, types and profiles an uploaded table.
pub fn ingest(
    csv: &[u8],
    overrides: &[TypeOverride],
    oracle: &dyn SemanticOracle,
) -> Result<(Dataset, DatasetProfile), pivotrec_core::dataset::DatasetError> {
    let mut dataset = load_table(csv, &LoadOptions::default())?;
    dataset.apply_type_overrides(overrides)?;
    Ok(DatasetProfile::prepare(dataset, oracle))
}

pub struct AppState {
    store: Store,
    oracle: Arc<dyn SemanticOracle>,
    embedder: Arc<dyn EmbeddingProvider>,
    session_defaults: RecommendConfig,
}

impl AppState {
    pub fn new(
        oracle: Arc<dyn SemanticOracle>,
        embedder: Arc<dyn EmbeddingProvider>,
        session_defaults: RecommendConfig,
        data_dir: Option<&Path>,
    ) -> Result<Arc<Self>, StoreError> {
        let store = match data_dir {
            Some(dir) => Store::open(dir, &*oracle)?,
            None => Store::in_memory(),
        };
        Ok(Arc::new(Self {
            store,
            oracle,
            embedder,
            session_defaults,
        }))
    }

    pub fn from_config(config: &ServerConfig) -> Result<Arc<Self>, String> {
        let oracle = build_oracle(
            config.oracle.as_ref(),
            config.oracle_cache.as_deref().map(|p| (p, config.cache_mode)),
        )
        .map_err(|e| e.to_string())?;
        let embedder = build_embedder(config.embedding.as_ref());
        Self::new(
            oracle,
            embedder,
            config.session_defaults.clone(),
            config.data_dir.as_deref(),
        )
        .map_err(|e| e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(post_dataset))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).patch(patch_session))
        .route("/sessions/{id}/recommendations", get(get_recommendations))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: ServerConfig) -> Result<(), String> {
    let state = AppState::from_config(&config)?;
    let addr: SocketAddr = config
        .listen
        .parse()
        .map_err(|e| format!("invalid listen address `{}`: {e}", config.listen))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    tracing::info!("listening on {addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json(body: &[u8]) -> ApiResult<Value> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))
}

fn parse_object(body: &[u8]) -> ApiResult<Map<String, Value>> {
    match parse_json(body)? {
        Value::Object(map) => Ok(map),
        _ => Err(ApiError::bad_request("expected a JSON object")),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn post_dataset(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let (csv, overrides) = if is_json {
        let mut map = parse_object(&body)?;
        let csv = match map.remove("csv") {
            Some(Value::String(s)) => s,
            _ => return Err(ApiError::bad_request("field `csv` must be a string")),
        };
        let overrides = match map.remove("types") {
            None | Some(Value::Null) => Vec::new(),
            Some(v) => parse_type_overrides(&v.to_string())?,
        };
        if let Some(extra) = map.keys().next() {
            return Err(ApiError::bad_request(format!("unknown field `{extra}`")));
        }
        (csv, overrides)
    } else {
        let text =
            String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("CSV body must be UTF-8"))?;
        (text, Vec::new())
    };
    let app2 = app.clone();
    let stored = blocking(move || -> ApiResult<StoredDataset> {
        let (dataset, profile) = ingest(csv.as_bytes(), &overrides, &*app2.oracle)?;
        Ok(StoredDataset {
            csv,
            overrides,
            dataset,
            profile,
        })
    })
    .await??;
    let summary = json!({
        "rows": stored.dataset.row_count(),
        "attributes": stored.dataset.attributes(),
    });
    let id = app.store.insert_dataset(stored)?;
    let mut body = summary;
    body["dataset_id"] = json!(id);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

/// Merges `patch` into `base` one level deep, descending into `scoring`.
fn merge_config(base: &RecommendConfig, patch: Map<String, Value>) -> ApiResult<RecommendConfig> {
    let mut merged = serde_json::to_value(base).expect("configs serialize");
    let target = merged.as_object_mut().expect("configs are objects");
    for (key, value) in patch {
        match (key.as_str(), value) {
            ("scoring", Value::Object(inner)) => {
                let scoring = target
                    .entry("scoring")
                    .or_insert_with(|| json!({}))
                    .as_object_mut()
                    .expect("scoring is an object");
                scoring.extend(inner);
            }
            (_, value) => {
                target.insert(key, value);
            }
        }
    }
    let config: RecommendConfig =
        serde_json::from_value(merged).map_err(|e| ApiError::bad_request(format!("invalid config: {e}")))?;
    config.validate()?;
    Ok(config)
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let mut map = parse_object(&body)?;
    let dataset_id = match map.remove("dataset_id") {
        Some(Value::String(s)) => s,
        _ => return Err(ApiError::bad_request("field `dataset_id` must be a string")),
    };
    // Accept the config either flattened or nested under "config".
    let patch = match map.remove("config") {
        Some(Value::Object(inner)) if map.is_empty() => inner,
        Some(_) => return Err(ApiError::bad_request("`config` must be the only other field")),
        None => map,
    };
    let stored = app.store.dataset(&dataset_id)?;
    let config = merge_config(&app.session_defaults, patch)?;
    config.validate_for(&stored.dataset)?;
    let session = Session::new(uuid::Uuid::new_v4().to_string(), dataset_id, config);
    let summary = session.summary();
    app.store.insert_session(session)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": summary.id, "config": summary.config })),
    )
        .into_response())
}

async fn get_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let handle = app.store.session(&id)?;
    let session = handle.lock().await;
    Ok(Json(session.summary()).into_response())
}

async fn patch_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let patch = parse_object(&body)?;
    let handle = app.store.session(&id)?;
    let mut session = handle.lock().await;
    let stored = app.store.dataset(&session.dataset_id)?;
    let config = merge_config(&session.config, patch)?;
    config.validate_for(&stored.dataset)?;
    session.config = config;
    app.store.persist_session(&session)?;
    Ok(Json(session.summary()).into_response())
}

async fn get_recommendations(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let handle = app.store.session(&id)?;
    // Held across the computation so batches for one session are serialized.
    let mut session = handle.lock_owned().await;
    let stored = app.store.dataset(&session.dataset_id)?;
    let app2 = app.clone();
    let bytes = blocking(move || -> ApiResult<Vec<u8>> {
        let batch = session.next_batch(&stored.dataset, &stored.profile, &*app2.oracle, &*app2.embedder)?;
        app2.store.persist_session(&session)?;
        Ok(batch.to_json_bytes())
    })
    .await??;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn post_feedback(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let mut map = parse_object(&body)?;
    let spec: PivotSpec = match map.remove("spec") {
        Some(v) => {
            serde_json::from_value(v).map_err(|e| ApiError::bad_request(format!("invalid spec: {e}")))?
        }
        None => return Err(ApiError::bad_request("missing field `spec`")),
    };
    let verdict: Verdict = match map.remove("verdict") {
        Some(v) => serde_json::from_value(v)
            .map_err(|_| ApiError::bad_request("`verdict` must be \"accepted\" or \"rejected\""))?,
        None => return Err(ApiError::bad_request("missing field `verdict`")),
    };
    let handle = app.store.session(&id)?;
    let mut session = handle.lock().await;
    session.apply_feedback(&spec, verdict)?;
    app.store.persist_session(&session)?;
    Ok(Json(session.summary()).into_response())
}
