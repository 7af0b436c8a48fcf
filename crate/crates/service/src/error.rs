use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown scene {0:?}")]
    UnknownScene(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    /// The requested tuple has no recording.
    #[error("{0}")]
    ManifestGap(String),
    #[error(transparent)]
    Core(#[from] biasbench_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownScene(_) | ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::ManifestGap(_) => StatusCode::CONFLICT,
            ApiError::Core(biasbench_core::Error::MissingEntry(_)) => StatusCode::CONFLICT,
            ApiError::Core(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
