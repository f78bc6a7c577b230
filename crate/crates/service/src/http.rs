//! JSON-over-HTTP API.
//!
//! Every response body is a JSON object carrying `schema_version`. Errors
//! carry `error_class`, `message` and `detail`.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex as AsyncMutex;

use nlstat_core::data::{ColumnKind, LoadOptions};

use crate::charts::ChartMode;
use crate::error::{Result, ServiceError};
use crate::session::{LoadedDataset, Session, SessionSettings};
use crate::store::Store;

pub const SCHEMA_VERSION: u32 = 1;

type SharedSession = Arc<AsyncMutex<Session>>;

pub struct AppState {
    settings: SessionSettings,
    store: Option<Store>,
    sessions: Mutex<HashMap<String, SharedSession>>,
    cancels: Mutex<HashMap<String, Arc<AtomicBool>>>,
}

impl AppState {
    /// `store` of `None` keeps sessions in memory only.
    pub fn new(settings: SessionSettings, store: Option<Store>) -> Arc<Self> {
        Arc::new(AppState {
            settings,
            store,
            sessions: Mutex::new(HashMap::new()),
            cancels: Mutex::new(HashMap::new()),
        })
    }

    fn register(&self, session: Session) -> SharedSession {
        let id = session.id().to_string();
        self.cancels.lock().unwrap().insert(id.clone(), session.cancel_flag());
        let shared = Arc::new(AsyncMutex::new(session));
        self.sessions.lock().unwrap().insert(id, shared.clone());
        shared
    }

    async fn session(self: &Arc<Self>, id: &str) -> Result<SharedSession> {
        if let Some(s) = self.sessions.lock().unwrap().get(id) {
            return Ok(s.clone());
        }
        let Some(store) = self.store.clone() else {
            return Err(ServiceError::SessionNotFound(id.to_string()));
        };
        let (id_owned, settings) = (id.to_string(), self.settings.clone());
        let session = blocking(move || store.load(&id_owned, settings)).await?;
        // Another request may have restored it meanwhile.
        if let Some(s) = self.sessions.lock().unwrap().get(id) {
            return Ok(s.clone());
        }
        Ok(self.register(session))
    }

    fn persist(&self, session: &Session) -> Result<()> {
        match &self.store {
            Some(store) => store.save(session),
            None => Ok(()),
        }
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(format!("worker task failed: {e}")))?
}

fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::SessionNotFound(_) => StatusCode::NOT_FOUND,
        ServiceError::NoDataset | ServiceError::NoModel => StatusCode::CONFLICT,
        ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::Engine(_) | ServiceError::UnsupportedChart(_) => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::Migration(_) | ServiceError::DanglingReference(_) | ServiceError::Storage(_) => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let b = self.body();
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error_class": b.error_class,
            "message": b.message,
            "detail": b.detail,
        });
        (status_of(&self), Json(body)).into_response()
    }
}

/// Wraps a payload object with the schema version.
fn ok<T: Serialize>(status: StatusCode, payload: &T) -> Response {
    let mut value = serde_json::to_value(payload).expect("payload types serialize");
    let value = match value.as_object_mut() {
        Some(map) => {
            map.insert("schema_version".into(), json!(SCHEMA_VERSION));
            value
        }
        None => json!({ "schema_version": SCHEMA_VERSION, "value": value }),
    };
    (status, Json(value)).into_response()
}

type Reply = std::result::Result<Response, ServiceError>;

async fn create_session(State(app): State<Arc<AppState>>) -> Reply {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(id.clone(), app.settings.clone());
    app.persist(&session)?;
    app.register(session);
    Ok(ok(StatusCode::CREATED, &json!({ "session_id": id })))
}

async fn session_info(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply {
    let s = app.session(&id).await?;
    let s = s.lock().await;
    Ok(ok(
        StatusCode::OK,
        &json!({
            "session_id": s.id(),
            "dataset": s.dataset().map(|d| d.info()),
            "n_models": s.models().len(),
            "active_formula": s.active_model().map(|m| m.spec.to_string()),
            "pending_offer": s.pending_offer(),
        }),
    ))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub delimiter: Option<String>,
    pub header: Option<bool>,
    pub source_name: Option<String>,
    /// Comma-separated column names forced to categorical.
    pub categorical: Option<String>,
    /// Comma-separated column names forced to continuous.
    pub continuous: Option<String>,
}

impl DatasetParams {
    pub fn load_options(&self) -> Result<LoadOptions> {
        let mut o = LoadOptions::default();
        if let Some(d) = &self.delimiter {
            let d = if d == "\\t" || d == "tab" { "\t" } else { d.as_str() };
            match d.as_bytes() {
                [b] => o.delimiter = *b,
                _ => return Err(ServiceError::BadRequest(format!("delimiter must be one byte, got {d:?}"))),
            }
        }
        if let Some(h) = self.header {
            o.has_header = h;
        }
        if let Some(s) = &self.source_name {
            o.source_name = s.clone();
        }
        let names = |s: &Option<String>| -> Vec<String> {
            s.iter().flat_map(|v| v.split(',')).map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect()
        };
        for c in names(&self.categorical) {
            o.overrides.insert(c, ColumnKind::Categorical);
        }
        for c in names(&self.continuous) {
            o.overrides.insert(c, ColumnKind::Continuous);
        }
        Ok(o)
    }
}

async fn upload_dataset(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<DatasetParams>,
    body: Bytes,
) -> Reply {
    let options = params.load_options()?;
    let s = app.session(&id).await?;
    let mut guard = s.lock_owned().await;
    let app2 = app.clone();
    let info = blocking(move || {
        let loaded = LoadedDataset::from_bytes(body.to_vec(), options)?;
        let info = guard.set_dataset(loaded)?;
        app2.persist(&guard)?;
        Ok(info)
    })
    .await?;
    Ok(ok(StatusCode::OK, &info))
}

#[derive(Debug, Deserialize)]
pub struct QueryBody {
    pub text: String,
}

async fn query(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Reply {
    let q: QueryBody = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::BadRequest(format!("expected {{\"text\": ...}}: {e}")))?;
    let s = app.session(&id).await?;
    let mut guard = s.lock_owned().await;
    let app2 = app.clone();
    let reply = blocking(move || {
        let reply = guard.handle_query(&q.text)?;
        app2.persist(&guard)?;
        Ok(reply)
    })
    .await?;
    Ok(ok(StatusCode::OK, &reply))
}

async fn cancel(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply {
    // Resolve the session first so unknown ids are 404.
    app.session(&id).await?;
    let flag = app.cancels.lock().unwrap().get(&id).cloned();
    let flag = flag.ok_or_else(|| ServiceError::SessionNotFound(id.clone()))?;
    flag.store(true, Ordering::Relaxed);
    Ok(ok(StatusCode::ACCEPTED, &json!({ "session_id": id, "cancel_requested": true })))
}

async fn model(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply {
    let s = app.session(&id).await?;
    let summary = s.lock().await.model_summary()?;
    Ok(ok(StatusCode::OK, &summary))
}

async fn model_views(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply {
    let s = app.session(&id).await?;
    let views = s.lock().await.model_views()?;
    Ok(ok(StatusCode::OK, &views))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct ChartParams {
    /// Comma-separated variable names.
    pub vars: String,
    pub mode: ChartMode,
}

async fn charts(State(app): State<Arc<AppState>>, Path(id): Path<String>, Query(p): Query<ChartParams>) -> Reply {
    let vars: Vec<&str> = p.vars.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    let s = app.session(&id).await?;
    let payload = s.lock().await.charts(&vars, p.mode)?;
    Ok(ok(StatusCode::OK, &payload))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct HopsParams {
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    pub focus: Option<String>,
}

async fn hops(State(app): State<Arc<AppState>>, Path(id): Path<String>, Query(p): Query<HopsParams>) -> Reply {
    let s = app.session(&id).await?;
    let guard = s.lock_owned().await;
    let (set, curves) = blocking(move || {
        let seed = p.seed.unwrap_or(guard.seed());
        guard.hops(p.draws.unwrap_or(nlstat_core::hops::DEFAULT_DRAWS), seed, p.focus.as_deref())
    })
    .await?;
    Ok(ok(StatusCode::OK, &json!({ "draws": set, "curves": curves })))
}

async fn transcript(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply {
    let s = app.session(&id).await?;
    let s = s.lock().await;
    Ok(ok(StatusCode::OK, &json!({ "session_id": s.id(), "entries": s.transcript() })))
}

async fn health() -> Response {
    ok(StatusCode::OK, &BTreeMap::from([("status", Value::from("ok"))]))
}

async fn not_found() -> Response {
    ServiceError::BadRequest("no such route".into()).into_response_with(StatusCode::NOT_FOUND)
}

impl ServiceError {
    fn into_response_with(self, status: StatusCode) -> Response {
        let mut r = self.into_response();
        *r.status_mut() = status;
        r
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/dataset", post(upload_dataset))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/cancel", post(cancel))
        .route("/sessions/{id}/model", get(model))
        .route("/sessions/{id}/model/views", get(model_views))
        .route("/sessions/{id}/charts", get(charts))
        .route("/sessions/{id}/hops", get(hops))
        .route("/sessions/{id}/transcript", get(transcript))
        .fallback(not_found)
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
