//! HTTP API for prediction, review sessions and weight editing.
//!
//! There is no authentication: the server is meant to be bound to a local
//! address by the person whose dataset it serves.
//!
//! Reads use an immutable dataset snapshot. Mutations (persisting accepted
//! flips, replacing an order) go through one writer lock, write the dataset
//! file when the state was loaded from one, and swap the snapshot. A mutation
//! for a target invalidates the other open sessions on that target.

pub mod documents;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use polex_core::active::ReviewError;
use polex_core::model::ModelError;
use polex_core::persist::{self, PersistError};
use polex_core::predict::PredictError;
use polex_core::weights::{resolve_table, WeightError};
use polex_core::{predict, Dataset, ReviewSession, SessionStatus, TagGroup, WeightConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use documents::{config_view, PredictionDocument, SuggestionDocument, WeightsDocument};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            detail: None,
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "UnknownSession",
            format!("no open session {id}"),
        )
    }

    fn invalidated(reason: &str) -> Self {
        ApiError::new(StatusCode::CONFLICT, "SessionInvalidated", reason)
    }
}

// Error displays start with the variant name.
fn code_of(e: &impl std::fmt::Display) -> String {
    let text = e.to_string();
    text.split(':').next().unwrap_or("Error").to_string()
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::EmptyScenario => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        if let ModelError::Weights(w) = e {
            return w.into();
        }
        ApiError::new(status, &code_of(&e), e.to_string())
    }
}

impl From<WeightError> for ApiError {
    fn from(e: WeightError) -> Self {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, &code_of(&e), e.to_string());
        if let WeightError::CyclicOrder(path) = &e {
            err.detail = Some(json!({ "cycle": path }));
        }
        err
    }
}

impl From<PredictError> for ApiError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::Model(m) => m.into(),
            other => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                &code_of(&other),
                other.to_string(),
            ),
        }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::Model(m) => return m.clone().into(),
            ReviewError::StaleSuggestion { .. } | ReviewError::SessionClosed => {
                StatusCode::CONFLICT
            }
            ReviewError::TooFewExamples(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::UnknownVertex(_) => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, &code_of(&e), e.to_string())
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            &code_of(&e),
            e.to_string(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let (Some(Value::Object(extra)), Value::Object(map)) = (self.detail, &mut body) {
            map.extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct ApiSession {
    review: ReviewSession,
    accepted: usize,
    rejected: usize,
}

struct SessionEntry {
    id: String,
    target: String,
    // set by other writers without taking the session lock
    invalidated: AtomicBool,
    state: tokio::sync::Mutex<ApiSession>,
}

struct Inner {
    path: Option<PathBuf>,
    snapshot: RwLock<Arc<Dataset>>,
    writer: tokio::sync::Mutex<()>,
    sessions: Mutex<HashMap<String, Arc<SessionEntry>>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// State over an in-memory dataset; mutations are kept in memory only.
    pub fn new(dataset: Dataset) -> Self {
        Self::build(dataset, None)
    }

    /// Loads the dataset and writes mutations back to the same file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        let path = path.as_ref().to_path_buf();
        let dataset = persist::load_dataset(&path)?;
        Ok(Self::build(dataset, Some(path)))
    }

    fn build(dataset: Dataset, path: Option<PathBuf>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                path,
                snapshot: RwLock::new(Arc::new(dataset)),
                writer: tokio::sync::Mutex::new(()),
                sessions: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn snapshot(&self) -> Arc<Dataset> {
        self.inner.snapshot.read().expect("snapshot lock").clone()
    }

    fn session(&self, id: &str) -> Result<Arc<SessionEntry>, ApiError> {
        self.inner
            .sessions
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn invalidate_target(&self, target: &str, except: Option<&str>) {
        for entry in self
            .inner
            .sessions
            .lock()
            .expect("session table lock")
            .values()
        {
            if entry.target == target && Some(entry.id.as_str()) != except {
                entry.invalidated.store(true, Ordering::SeqCst);
            }
        }
    }

    /// Applies `change` to a copy of the snapshot, saves it, and swaps it in.
    /// Callers must hold the writer lock.
    fn commit(
        &self,
        change: impl FnOnce(&mut Dataset) -> Result<(), ApiError>,
    ) -> Result<Arc<Dataset>, ApiError> {
        let mut next = (*self.snapshot()).clone();
        change(&mut next)?;
        if let Some(path) = &self.inner.path {
            persist::save_dataset(&next, path)?;
        }
        let next = Arc::new(next);
        *self.inner.snapshot.write().expect("snapshot lock") = next.clone();
        Ok(next)
    }
}

#[derive(Deserialize)]
struct PredictRequest {
    scenario: Vec<String>,
}

async fn http_predict(
    State(app): State<AppState>,
    UrlPath(target): UrlPath<String>,
    Json(req): Json<PredictRequest>,
) -> ApiResult<PredictionDocument> {
    let d = app.snapshot();
    let labeled = d.per_target_view(&target)?;
    let query = d.universe().scenario(&req.scenario)?;
    let w = resolve_table(&d, &target);
    let p = predict(&query, &labeled, &w)?;
    Ok(Json(PredictionDocument::new(
        d.universe(),
        &target,
        &query,
        &labeled,
        &p,
    )))
}

#[derive(Serialize)]
struct Counters {
    issued: usize,
    accepted: usize,
    rejected: usize,
    remaining: usize,
}

#[derive(Serialize)]
struct SessionView {
    id: String,
    target: String,
    status: SessionStatus,
    invalidated: bool,
    cap: usize,
    suggestion: Option<SuggestionDocument>,
    counters: Counters,
}

fn view(entry: &SessionEntry, s: &ApiSession, d: &Dataset) -> SessionView {
    let pending = s.review.pending();
    SessionView {
        id: entry.id.clone(),
        target: entry.target.clone(),
        status: s.review.status(),
        invalidated: entry.invalidated.load(Ordering::SeqCst),
        cap: s.review.cap(),
        suggestion: pending.map(|p| SuggestionDocument::new(d.universe(), p)),
        counters: Counters {
            issued: s.accepted + s.rejected + usize::from(pending.is_some()),
            accepted: s.accepted,
            rejected: s.rejected,
            remaining: s.review.remaining_violations(),
        },
    }
}

// Moves the session forward to its next suggestion, if it is still active.
fn advance(s: &mut ApiSession) -> Result<(), ApiError> {
    if s.review.status() == SessionStatus::Active {
        s.review.next_suggestion()?;
    }
    Ok(())
}

#[derive(Deserialize, Default)]
struct OpenRequest {
    cap: Option<usize>,
}

async fn http_open_session(
    State(app): State<AppState>,
    UrlPath(target): UrlPath<String>,
    body: Option<Json<OpenRequest>>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let d = app.snapshot();
    let cap = body
        .and_then(|b| b.0.cap)
        .unwrap_or(polex_core::active::DEFAULT_CAP);
    let review = ReviewSession::new(&d, &target, cap)?;
    let mut s = ApiSession {
        review,
        accepted: 0,
        rejected: 0,
    };
    advance(&mut s)?;
    let id = uuid::Uuid::new_v4().to_string();
    let entry = Arc::new(SessionEntry {
        id: id.clone(),
        target,
        invalidated: AtomicBool::new(false),
        state: tokio::sync::Mutex::new(s),
    });
    let body = {
        let s = entry.state.lock().await;
        view(&entry, &s, &d)
    };
    app.inner
        .sessions
        .lock()
        .expect("session table lock")
        .insert(id, entry);
    Ok((StatusCode::CREATED, Json(body)))
}

async fn http_get_session(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<SessionView> {
    let entry = app.session(&id)?;
    let s = entry.state.lock().await;
    Ok(Json(view(&entry, &s, &app.snapshot())))
}

#[derive(Deserialize)]
struct RespondRequest {
    vertex: usize,
    accept: bool,
}

#[derive(Deserialize, Default)]
struct RespondQuery {
    autosave: Option<String>,
}

fn truthy(flag: &Option<String>) -> bool {
    matches!(flag.as_deref(), Some("1" | "true" | "yes"))
}

// Writes the session's labels into the dataset. Caller holds the session lock.
async fn persist_session(
    app: &AppState,
    entry: &SessionEntry,
    s: &ApiSession,
) -> Result<(), ApiError> {
    let _w = app.inner.writer.lock().await;
    // re-checked under the writer lock: a concurrent writer may have won
    if entry.invalidated.load(Ordering::SeqCst) {
        return Err(ApiError::invalidated(
            "the dataset changed for this target; reopen the session",
        ));
    }
    app.commit(|d| s.review.apply_to(d).map_err(ApiError::from))?;
    app.invalidate_target(&entry.target, Some(&entry.id));
    Ok(())
}

async fn http_respond(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<RespondQuery>,
    Json(req): Json<RespondRequest>,
) -> ApiResult<SessionView> {
    let entry = app.session(&id)?;
    let mut s = entry.state.lock().await;
    if entry.invalidated.load(Ordering::SeqCst) {
        return Err(ApiError::invalidated(
            "the dataset changed for this target; reopen the session",
        ));
    }
    let outcome = s.review.respond(req.vertex, req.accept)?;
    if outcome.entry.accepted {
        s.accepted += 1;
        if truthy(&q.autosave) {
            persist_session(&app, &entry, &s).await?;
        }
    } else {
        s.rejected += 1;
    }
    advance(&mut s)?;
    Ok(Json(view(&entry, &s, &app.snapshot())))
}

#[derive(Serialize)]
struct CloseView {
    id: String,
    saved: bool,
    accepted: usize,
}

async fn http_close(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<CloseView> {
    let entry = app.session(&id)?;
    let s = entry.state.lock().await;
    app.inner
        .sessions
        .lock()
        .expect("session table lock")
        .remove(&id);
    if entry.invalidated.load(Ordering::SeqCst) {
        return Err(ApiError::invalidated(
            "the dataset changed for this target; answers were discarded",
        ));
    }
    let saved = s.accepted > 0;
    if saved {
        persist_session(&app, &entry, &s).await?;
    }
    Ok(Json(CloseView {
        id,
        saved,
        accepted: s.accepted,
    }))
}

#[derive(Serialize)]
struct DatasetView {
    tags: Vec<String>,
    targets: Vec<String>,
    rows: usize,
    fingerprint: String,
}

async fn http_dataset(State(app): State<AppState>) -> Json<DatasetView> {
    let d = app.snapshot();
    Json(DatasetView {
        tags: d.universe().names().to_vec(),
        targets: d.targets().iter().map(|t| t.name().to_string()).collect(),
        rows: d.rows().len(),
        fingerprint: persist::fingerprint(&d),
    })
}

async fn http_weights(
    State(app): State<AppState>,
    UrlPath(target): UrlPath<String>,
) -> ApiResult<WeightsDocument> {
    let d = app.snapshot();
    d.target_index(&target)?;
    let table = resolve_table(&d, &target);
    Ok(Json(WeightsDocument::new(&d, &target, &table)))
}

#[derive(Deserialize)]
struct GroupRequest {
    name: String,
    tags: Vec<String>,
}

#[derive(Deserialize)]
struct OrderRequest {
    /// Replaces the groups as well when present; otherwise the target's
    /// current groups are kept.
    groups: Option<Vec<GroupRequest>>,
    order: Vec<(String, String)>,
}

async fn http_put_order(
    State(app): State<AppState>,
    UrlPath(target): UrlPath<String>,
    Json(req): Json<OrderRequest>,
) -> ApiResult<WeightsDocument> {
    let _w = app.inner.writer.lock().await;
    let current = app.snapshot();
    current.target_index(&target)?;
    let u = current.universe();
    let groups = match &req.groups {
        Some(gs) => gs
            .iter()
            .map(|g| {
                let ids = g
                    .tags
                    .iter()
                    .map(|t| u.id(t).ok_or_else(|| ModelError::UnknownTag(t.clone())))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(TagGroup::new(g.name.clone(), ids)?)
            })
            .collect::<Result<Vec<_>, ApiError>>()?,
        None => match current.weights().config_for(&target) {
            Some(c) => c.groups().to_vec(),
            None => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "NoGroups",
                    format!("target {target} has no tag groups; send \"groups\" with the order"),
                ))
            }
        },
    };
    let config = WeightConfig::new(groups, &req.order)?;
    polex_core::synthesize_weights(&config, u)?;
    let next = app.commit(|d| {
        let mut settings = d.weights().clone();
        settings.per_target.insert(target.clone(), config);
        d.set_weights(settings).map_err(ApiError::from)
    })?;
    app.invalidate_target(&target, None);
    log::info!(
        "order for {target} replaced: {:?}",
        next.weights()
            .config_for(&target)
            .map(|c| config_view(c, next.universe()).order)
    );
    let table = resolve_table(&next, &target);
    Ok(Json(WeightsDocument::new(&next, &target, &table)))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

/// The API router, with `ui` (if given) served as static files for every
/// other path.
pub fn router(state: AppState, ui: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/dataset", get(http_dataset))
        .route("/targets/{target}/predict", post(http_predict))
        .route("/targets/{target}/sessions", post(http_open_session))
        .route("/targets/{target}/weights", get(http_weights))
        .route("/targets/{target}/order", put(http_put_order))
        .route("/sessions/{id}", get(http_get_session))
        .route("/sessions/{id}/respond", post(http_respond))
        .route("/sessions/{id}/close", post(http_close))
        .fallback(api_not_found)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match ui {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: AppState, bind: SocketAddr, ui: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui)).await
}
