use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pivotrec_core::dataset::DatasetError;
use pivotrec_core::recommend::{ConfigError, RecommendError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Infeasible,
    OracleUnavailable,
    Internal,
}

/// Body of every non-2xx response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
    #[serde(skip)]
    status: Option<u16>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
            status: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    /// Overrides the status implied by the code.
    pub fn with_status(mut self, status: StatusCode) -> Self {
        self.status = Some(status.as_u16());
        self
    }

    pub fn status(&self) -> StatusCode {
        if let Some(s) = self.status.and_then(|s| StatusCode::from_u16(s).ok()) {
            return s;
        }
        match self.code {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Infeasible | ErrorCode::OracleUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        let detail = match &e {
            DatasetError::Ragged { row, .. } | DatasetError::Csv { row, .. } => Some(json!({ "row": row })),
            DatasetError::UnknownAttribute(name) => Some(json!({ "attribute": name })),
            _ => None,
        };
        let mut err = ApiError::bad_request(e.to_string());
        err.detail = detail;
        err
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        let err = ApiError::bad_request(e.to_string());
        match e {
            ConfigError::UnknownFocus(attrs) => err.with_detail(json!({ "unknown_attributes": attrs })),
            _ => err,
        }
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::Config(c) => c.into(),
            RecommendError::PoolTooLarge { size, cap } => ApiError::new(ErrorCode::Infeasible, e.to_string())
                .with_detail(json!({ "candidates": size, "pool_cap": cap })),
            RecommendError::UnknownSpec(_) => {
                // The code set has no conflict value; the status carries it.
                ApiError::bad_request(e.to_string()).with_status(StatusCode::CONFLICT)
            }
            RecommendError::BruteForceTooLarge(_) => ApiError::internal(e.to_string()),
        }
    }
}
