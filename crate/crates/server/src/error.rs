use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rexkb_core::KbError;

/// Error body: a stable code, human text, and optional structured detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

/// HTTP status for an engine error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "NOT_FOUND" => StatusCode::NOT_FOUND,
        "PERMISSION_DENIED" => StatusCode::FORBIDDEN,
        "UNKNOWN_ACTOR" => StatusCode::UNAUTHORIZED,
        "ILLEGAL_TRANSITION" | "ALREADY_DECIDED" | "ALREADY_VALIDATED" | "DUPLICATE_LINK"
        | "CONFLICT" | "DUPLICATE_DOC_ID" => StatusCode::CONFLICT,
        "MALFORMED" => StatusCode::BAD_REQUEST,
        "IO_FAILURE" | "CONFIG_ERROR" | "INJECTED_FAULT" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            detail: None,
        }
    }

    /// Missing or unknown bearer token.
    pub fn unauthenticated(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "PERMISSION_DENIED", message)
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MALFORMED", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "INVALID_ARGUMENT",
            message,
        )
    }
}

fn detail(err: &KbError) -> Option<Value> {
    match err {
        KbError::NotFound { kind, id } => Some(json!({ "kind": kind, "id": id })),
        KbError::SchemaViolation {
            source_type,
            link_type,
            target_type,
        } => Some(
            json!({ "source_type": source_type, "link_type": link_type, "target_type": target_type }),
        ),
        KbError::DuplicateLink {
            source_id,
            target_id,
            link_type,
        } => Some(json!({ "source": source_id, "target": target_id, "link_type": link_type })),
        KbError::WrongType {
            id,
            expected,
            actual,
        } => Some(json!({ "id": id, "expected": expected, "actual": actual })),
        KbError::IllegalTransition { fait, .. } => Some(json!({ "fait": fait })),
        _ => None,
    }
}

impl From<KbError> for ApiError {
    fn from(err: KbError) -> Self {
        let code = err.code();
        Self {
            status: status_for(code).as_u16(),
            code: code.to_string(),
            message: err.to_string(),
            detail: detail(&err),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
