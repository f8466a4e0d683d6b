//! HTTP backend for the human abstention study.
//!
//! ```text
//! POST /sessions                  {"condition": "baseline"|"mope", "seed"?: u64}
//! GET  /sessions/{id}/next        next unjudged trial, or {"done": true}
//! POST /sessions/{id}/judgments   {"trial_id", "decision", "confidence", "elapsed_ms"}
//! GET  /sessions/{id}/summary
//! ```
//!
//! Errors are `{"code", "message"}` with 404, 409 or 422.

pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use selqa_core::rng::keyed_seed;
use selqa_core::study::{
    create_session, session_summary, Condition, Decision, Judgment, SessionSummary, StudyItem, TrialPayload,
    DEFAULT_TRIALS,
};

pub use error::ApiError;
pub use store::Store;

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub pool: Arc<Vec<StudyItem>>,
    pub n_trials: usize,
}

impl AppState {
    pub fn new(store: Store, pool: Vec<StudyItem>) -> Self {
        AppState {
            store: Arc::new(store),
            pool: Arc::new(pool),
            n_trials: DEFAULT_TRIALS,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub condition: Condition,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub condition: Condition,
    pub n_trials: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Next {
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<TrialPayload>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentBody {
    pub trial_id: String,
    pub decision: Decision,
    pub confidence: u8,
    pub elapsed_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub stored: bool,
    pub remaining: usize,
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(t)| t).map_err(|e| ApiError::Validation(e.body_text()))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn entry(state: &AppState, id: &str) -> Result<Arc<store::Entry>, ApiError> {
    state
        .store
        .get(id)
        .ok_or_else(|| ApiError::NotFound(format!("no session `{id}`")))
}

async fn create(
    State(state): State<AppState>,
    req: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req = body(req)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let seed = req.seed.unwrap_or_else(|| keyed_seed(0, &id));
    let session = create_session(&id, req.condition, &state.pool, seed, state.n_trials, now_ms())
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let n_trials = session.trials.len();
    let condition = session.condition;
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || store.insert(session))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            condition,
            n_trials,
        }),
    ))
}

async fn next(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Next>, ApiError> {
    let e = entry(&state, &id)?;
    let trial = e.session.next_payload(&e.judged());
    Ok(Json(Next {
        done: trial.is_none(),
        trial,
    }))
}

async fn judge(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<JudgmentBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Ack>), ApiError> {
    let e = entry(&state, &id)?;
    let b = body(req)?;
    let j = Judgment {
        session_id: id,
        trial_id: b.trial_id,
        decision: b.decision,
        confidence: b.confidence,
        elapsed_ms: b.elapsed_ms,
    };
    let store = state.store.clone();
    let remaining = tokio::task::spawn_blocking(move || store.submit(&e, j))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| match e {
            store::SubmitError::Rejected(r) => ApiError::from(r),
            store::SubmitError::Io(io) => ApiError::from(io),
        })?;
    Ok((StatusCode::CREATED, Json(Ack { stored: true, remaining })))
}

async fn summary(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let e = entry(&state, &id)?;
    match session_summary(&e.session, &e.judgments()) {
        Ok(s) => Ok(Json(s)),
        Err(selqa_core::Error::IncompleteSession(t)) => Err(ApiError::Incomplete(t)),
        Err(other) => Err(ApiError::Internal(other.to_string())),
    }
}

pub fn app(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/judgments", post(judge))
        .route("/sessions/{id}/summary", get(summary))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app(state)).await
}
