use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<acc_core::Error> for ServiceError {
    fn from(e: acc_core::Error) -> Self {
        use acc_core::Error as E;
        match e {
            E::InvalidPair(..)
            | E::OutOfRange(_)
            | E::InvalidParameter(_)
            | E::InvalidClustering(_)
            | E::TooLarge(_)
            | E::Parse(_)
            | E::UnknownStrategy(_)
            | E::ConfigMismatch(_) => ServiceError::BadRequest(e.to_string()),
            _ => ServiceError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if let ServiceError::Internal(msg) = &self {
            tracing::error!(error = %msg, "request failed");
        }
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}
