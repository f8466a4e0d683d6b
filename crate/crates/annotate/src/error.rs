use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use selqa_core::study::JudgmentError;

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unjudged: Option<Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Conflict(String),
    #[error("session has unjudged trials")]
    Incomplete(Vec<String>),
    #[error("{0}")]
    Internal(String),
}

impl From<JudgmentError> for ApiError {
    fn from(e: JudgmentError) -> Self {
        match e {
            JudgmentError::UnknownTrial(_) => ApiError::NotFound(e.to_string()),
            JudgmentError::Duplicate(_) => ApiError::Conflict(e.to_string()),
            JudgmentError::Invalid(_) => ApiError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Internal(format!("storage error: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ApiError::Incomplete(_) => (StatusCode::CONFLICT, "incomplete"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let unjudged = match &self {
            ApiError::Incomplete(t) => Some(t.clone()),
            _ => None,
        };
        let message = match &self {
            ApiError::Incomplete(t) => format!("unjudged trials: {}", t.join(", ")),
            other => other.to_string(),
        };
        (status, Json(ErrorBody { code, message, unjudged })).into_response()
    }
}
