use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("no session `{0}`")]
    NoSession(String),
    #[error("no dataset `{0}`")]
    NoDataset(String),
    #[error("session `{0}` is embedding; retry when idle")]
    Busy(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] snack_core::Error),
    #[error("no such route")]
    NotFound,
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        use snack_core::Error as E;
        match self {
            ApiError::NoSession(_) | ApiError::NoDataset(_) | ApiError::NotFound => StatusCode::NOT_FOUND,
            ApiError::Busy(_) => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Core(
                E::InvalidConfig(_)
                | E::InvalidInput(_)
                | E::InfeasiblePerplexity { .. }
                | E::UnknownId(_)
                | E::TripletOutOfRange { .. }
                | E::DegenerateTriplet { .. }
                | E::DegenerateRow(_),
            ) => StatusCode::BAD_REQUEST,
            ApiError::Core(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}
