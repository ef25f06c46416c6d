use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use cultiverse_core::{AnalyticsError, AnnotationError, BackgroundError, ParseError, PromptError, TemplateError};
use serde::Serialize;

use crate::files::IngestError;
use crate::gateway::GatewayError;
use crate::store::StoreError;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(serialize_with = "ser_status")]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    /// Request field the error refers to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Model reply that could not be parsed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

fn ser_status<S: serde::Serializer>(s: &StatusCode, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_u16(s.as_u16())
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), field: None, raw: None }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn with_raw(mut self, raw: impl Into<String>) -> Self {
        self.raw = Some(raw.into());
        self
    }

    pub fn unknown_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("unknown session {id}"))
    }

    pub fn unknown_norm(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_norm", format!("unknown norm {id}")).with_field("norm_id")
    }

    pub fn unknown_translation(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_translation", format!("unknown translation {id}"))
            .with_field("translation_id")
    }

    pub fn unknown_target(index: usize, len: usize) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_target",
            format!("translation has {len} target norm(s), index {index} requested"),
        )
        .with_field("target_index")
    }

    pub fn unknown_scope(s: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_scope", format!("unknown scope {s:?}"))
    }

    pub fn unknown_artifact(name: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_artifact", format!("no artifact {name}"))
    }

    pub fn invalid_body(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", message)
    }

    pub fn unauthorized() -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
    }

    pub fn not_found() -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint")
    }

    pub fn malformed_response(e: &ParseError, raw: &str) -> Self {
        ApiError::from(e.clone()).with_raw(raw)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(&self)).into_response()
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let msg = e.to_string();
        match e {
            AnnotationError::UnknownPainting(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_painting", msg),
            AnnotationError::UnknownElement(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "annotation_unknown_element", msg).with_field("element")
            }
            AnnotationError::OutOfBounds { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "out_of_bounds", msg).with_field("box")
            }
            AnnotationError::DuplicateAnnotation(_) => ApiError::new(StatusCode::CONFLICT, "duplicate_annotation", msg),
            AnnotationError::UnknownAnnotation(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_annotation", msg),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let msg = e.to_string();
        match e {
            AnalyticsError::UnknownElement(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_element", msg),
            AnalyticsError::UnknownPainting(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_painting", msg),
        }
    }
}

impl From<BackgroundError> for ApiError {
    fn from(e: BackgroundError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_background", e.message).with_field(e.field)
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        let msg = e.to_string();
        let unprocessable = |code, field| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, msg.clone()).with_field(field);
        match e {
            PromptError::UnknownPreset(_) => unprocessable("unknown_preset", "preset"),
            PromptError::EmptyQuestion => unprocessable("empty_question", "question"),
            PromptError::EmptyTask => unprocessable("empty_task", "task"),
            PromptError::EmptyConditions => unprocessable("empty_conditions", "conditions"),
            PromptError::EmptyQuestions => unprocessable("empty_questions", "questions"),
            PromptError::Template(t) => t.into(),
        }
    }
}

impl From<TemplateError> for ApiError {
    fn from(e: TemplateError) -> Self {
        let msg = e.to_string();
        match e {
            TemplateError::UnknownPlaceholder { .. }
            | TemplateError::UnusedValue { .. }
            | TemplateError::Unterminated { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "template_error", msg),
        }
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        let msg = e.to_string();
        match e {
            ParseError::MalformedResponse { .. } | ParseError::SchemaViolation { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_llm_response", msg)
            }
        }
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let msg = e.to_string();
        match e {
            GatewayError::ProviderTimeout { .. } => ApiError::new(StatusCode::BAD_GATEWAY, "provider_timeout", msg),
            GatewayError::ProviderRefused(_) => ApiError::new(StatusCode::BAD_GATEWAY, "provider_refused", msg),
            GatewayError::ScriptedMiss(_) => ApiError::new(StatusCode::BAD_GATEWAY, "scripted_miss", msg),
            GatewayError::UnknownTurn(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_turn", msg),
            GatewayError::UnknownResult(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_image", msg),
            GatewayError::Artifact(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "artifact_io", msg),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::Io { .. } | StoreError::Corrupt { .. } | StoreError::OutOfOrder { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", msg)
            }
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let msg = e.to_string();
        let code = match e {
            IngestError::FileMissing { .. } => "dataset_file_missing",
            IngestError::Parse { .. } => "dataset_parse_error",
            IngestError::ValidationFailed(_) => "dataset_invalid",
            IngestError::Io { .. } => "dataset_io",
            IngestError::Unencodable { .. } => "dataset_unencodable",
        };
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code, msg)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        let msg = e.body_text();
        let err = match e {
            JsonRejection::JsonSyntaxError(_) => ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", msg.clone()),
            JsonRejection::MissingJsonContentType(_) => {
                ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type", msg.clone())
            }
            _ => ApiError::invalid_body(msg.clone()),
        };
        match missing_field(&msg) {
            Some(f) => err.with_field(f),
            None => err,
        }
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_path", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text())
    }
}

/// Pulls `x` out of serde's "missing field `x`" message.
fn missing_field(msg: &str) -> Option<&str> {
    let rest = &msg[msg.find("missing field `")? + "missing field `".len()..];
    Some(&rest[..rest.find('`')?])
}
