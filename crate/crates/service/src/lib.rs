//! JSON-over-HTTP sessions for interactive embedding refinement.
//!
//! | method | path | effect |
//! |---|---|---|
//! | `POST` | `/sessions` | open a session, returns revision 1 |
//! | `GET` | `/sessions/{id}` | latest completed revision |
//! | `POST` | `/sessions/{id}/selections` | expand one screen into triplets |
//! | `POST` | `/sessions/{id}/reembed` | warm-started re-optimization |
//! | `GET` | `/sessions/{id}/export` | triplets and embedding as CSV text |
//! | `GET` | `/health` | `ok` |
//!
//! Every error body is `{"error": "..."}`.

mod error;
mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use snack_core::io::{write_embedding, write_triplets};
use snack_core::{EmbedConfig, Embedding, Lambda};

pub use error::ApiError;
pub use session::{Dataset, Overrides, Session, Snapshot, Status, WARM_START_JITTER};

/// Name used when a create request does not name a dataset.
pub const DEFAULT_DATASET: &str = "default";

/// Datasets plus live sessions.
#[derive(Debug, Default)]
pub struct AppState {
    datasets: HashMap<String, Arc<Dataset>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(datasets: impl IntoIterator<Item = Dataset>) -> Self {
        Self {
            datasets: datasets
                .into_iter()
                .map(|d| (d.name.clone(), Arc::new(d)))
                .collect(),
            ..Self::default()
        }
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NoSession(id.to_string()))
    }
}

/// Coordinate payload shared by every state-returning endpoint.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatePayload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub ids: Vec<String>,
    pub coords: Vec<Vec<f64>>,
    pub revision: u64,
    pub status: Status,
    pub triplet_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StatePayload {
    fn of(session: &Session) -> Self {
        let snap = session.snapshot();
        Self {
            id: None,
            ids: session.dataset.kernel.ids().to_vec(),
            coords: snap.coords.rows().into_iter().map(|r| r.to_vec()).collect(),
            revision: snap.revision,
            status: snap.status,
            triplet_count: snap.triplet_count,
            error: snap.error,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreateRequest {
    pub dataset: Option<String>,
    pub perplexity: Option<f64>,
    pub alpha: Option<f64>,
    pub dims: Option<usize>,
    pub iters: Option<usize>,
    pub exaggeration_iters: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
}

impl CreateRequest {
    fn config(&self) -> EmbedConfig {
        let d = EmbedConfig::default();
        EmbedConfig {
            perplexity: self.perplexity.unwrap_or(d.perplexity),
            alpha: self.alpha.unwrap_or(d.alpha),
            dims: self.dims.unwrap_or(d.dims),
            total_iters: self.iters.unwrap_or(d.total_iters),
            exaggeration_iters: self.exaggeration_iters.unwrap_or(d.exaggeration_iters),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SelectionRequest {
    pub reference: String,
    pub selected: Vec<String>,
    pub shown: Vec<String>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionResponse {
    pub added: usize,
    pub triplet_count: usize,
}

/// `lambda` may be a number or the string `"auto"`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LambdaArg {
    Number(f64),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReembedRequest {
    lambda: Option<LambdaArg>,
    alpha: Option<f64>,
    iters: Option<usize>,
    exaggeration_iters: Option<usize>,
    learning_rate: Option<f64>,
    /// Respond only after the new revision is published.
    #[serde(default)]
    wait: bool,
}

impl ReembedRequest {
    fn overrides(&self) -> Result<Overrides, ApiError> {
        let lambda = match &self.lambda {
            None => None,
            Some(LambdaArg::Number(x)) => Some(Lambda::Fixed(*x)),
            Some(LambdaArg::Text(s)) => {
                Some(s.parse().map_err(|e: snack_core::Error| ApiError::BadRequest(e.to_string()))?)
            }
        };
        Ok(Overrides {
            lambda,
            alpha: self.alpha,
            total_iters: self.iters,
            exaggeration_iters: self.exaggeration_iters,
            learning_rate: self.learning_rate,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct ExportPayload {
    pub revision: u64,
    /// `triplets.csv` contents.
    pub triplets: String,
    /// `embedding.csv` contents.
    pub embedding: String,
}

/// Parses a JSON body; an empty body is the type's default.
fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn health() -> &'static str {
    "ok"
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: CreateRequest = parse_body(&body)?;
    let name = req.dataset.clone().unwrap_or_else(|| DEFAULT_DATASET.to_string());
    let dataset = app
        .datasets
        .get(&name)
        .cloned()
        .ok_or(ApiError::NoDataset(name))?;
    let id = (app.next_id.fetch_add(1, Ordering::Relaxed) + 1).to_string();
    let cfg = req.config();
    let session = Arc::new(blocking(move || Session::create(id, dataset, cfg)).await?);
    app.sessions
        .write()
        .unwrap_or_else(|p| p.into_inner())
        .insert(session.id.clone(), session.clone());
    let mut payload = StatePayload::of(&session);
    payload.id = Some(session.id.clone());
    Ok((StatusCode::CREATED, Json(payload)))
}

async fn get_state(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<StatePayload>, ApiError> {
    let session = app.session(&id)?;
    Ok(Json(StatePayload::of(&session)))
}

async fn submit_selection(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SelectionResponse>, ApiError> {
    let session = app.session(&id)?;
    let req: SelectionRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))?;
    let (added, triplet_count) = session.submit_selection(&req.reference, &req.selected, &req.shown)?;
    Ok(Json(SelectionResponse {
        added,
        triplet_count,
    }))
}

async fn reembed(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let session = app.session(&id)?;
    let req: ReembedRequest = parse_body(&body)?;
    let job = session.claim_reembed(&req.overrides()?)?;
    if req.wait {
        let runner = session.clone();
        blocking(move || runner.run(job)).await?;
        Ok((StatusCode::OK, Json(StatePayload::of(&session))))
    } else {
        let runner = session.clone();
        tokio::task::spawn_blocking(move || {
            // failures are recorded on the session
            let _ = runner.run(job);
        });
        Ok((StatusCode::ACCEPTED, Json(StatePayload::of(&session))))
    }
}

async fn export(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ExportPayload>, ApiError> {
    let session = app.session(&id)?;
    let snap = session.snapshot();
    let triplets = session.triplets();
    let index = session.dataset.index();
    let mut t_csv = Vec::new();
    write_triplets(&triplets, index, &mut t_csv).map_err(|e| ApiError::Internal(e.to_string()))?;
    let y = Embedding::new(index.ids().to_vec(), snap.coords)?;
    let mut y_csv = Vec::new();
    write_embedding(&y, &mut y_csv).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(ExportPayload {
        revision: snap.revision,
        triplets: String::from_utf8(t_csv).expect("csv output is UTF-8"),
        embedding: String::from_utf8(y_csv).expect("csv output is UTF-8"),
    }))
}

async fn not_found() -> ApiError {
    ApiError::NotFound
}

/// All routes; with `static_dir`, unmatched paths are served from it.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/selections", post(submit_selection))
        .route("/sessions/{id}/reembed", post(reembed))
        .route("/sessions/{id}/export", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

/// Serves until the listener fails.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, static_dir)).await
}
