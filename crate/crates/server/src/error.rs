use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use hopaas_core::pruner::PrunerError;
use hopaas_core::sampler::SamplerError;
use hopaas_core::space::SpaceError;
use hopaas_core::storage::StoreError;
use serde_json::json;
use thiserror::Error;

/// The single body every authentication failure returns.
pub const UNAUTHORIZED_BODY: &str = r#"{"error":"unauthorized"}"#;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unauthorized")]
    Unauthorized,
    #[error("{0}")]
    Invalid(String),
    #[error("invalid search space")]
    InvalidSpace(Vec<String>),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("grid exhausted")]
    GridExhausted,
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Invalid(_) | ApiError::InvalidSpace(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) | ApiError::GridExhausted => StatusCode::CONFLICT,
            ApiError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn body(&self) -> String {
        let value = match self {
            ApiError::Unauthorized => return UNAUTHORIZED_BODY.to_owned(),
            ApiError::Invalid(detail) => json!({"error": "invalid_request", "detail": detail}),
            ApiError::InvalidSpace(violations) => json!({"error": "invalid_space", "violations": violations}),
            ApiError::NotFound(detail) => json!({"error": "not_found", "detail": detail}),
            ApiError::Conflict(detail) => json!({"error": "conflict", "detail": detail}),
            ApiError::GridExhausted => json!({"error": "grid_exhausted"}),
            ApiError::Unavailable(detail) => json!({"error": "unavailable", "detail": detail}),
            ApiError::Internal(detail) => json!({"error": "internal", "detail": detail}),
        };
        value.to_string()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let headers = [(axum::http::header::CONTENT_TYPE, "application/json")];
        (self.status(), headers, self.body()).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::AuthRejected(_) => ApiError::Unauthorized,
            StoreError::UnknownStudy(_) | StoreError::UnknownTrial(_) | StoreError::UnknownToken(_) => {
                ApiError::NotFound(e.to_string())
            }
            StoreError::IllegalTransition(_) | StoreError::TrialNotRunning(_) => ApiError::Conflict(e.to_string()),
            StoreError::NonMonotonicStep { .. }
            | StoreError::NonFiniteValue(_)
            | StoreError::ParamsMismatch
            | StoreError::InvalidValidity => ApiError::Invalid(e.to_string()),
            StoreError::Unavailable(_) => ApiError::Unavailable(e.to_string()),
            StoreError::Corrupt(_) | StoreError::UnsupportedSchema(_) => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<SpaceError> for ApiError {
    fn from(e: SpaceError) -> Self {
        ApiError::InvalidSpace(e.0.iter().map(ToString::to_string).collect())
    }
}

impl From<SamplerError> for ApiError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::GridExhausted => ApiError::GridExhausted,
            SamplerError::GridMissing(_) | SamplerError::GridUnknown(_) => ApiError::Invalid(e.to_string()),
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<PrunerError> for ApiError {
    fn from(e: PrunerError) -> Self {
        ApiError::Invalid(e.to_string())
    }
}
