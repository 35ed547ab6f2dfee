use fits_core::analysis::AnalysisError;
use fits_core::engine::{EngineError, ErrorClass};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// 400
    Malformed,
    /// 404
    NotFound,
    /// 409
    Conflict,
    /// 422
    Invalid,
    /// 500
    Internal,
}

impl ErrorKind {
    pub fn status(self) -> u16 {
        match self {
            ErrorKind::Malformed => 400,
            ErrorKind::NotFound => 404,
            ErrorKind::Conflict => 409,
            ErrorKind::Invalid => 422,
            ErrorKind::Internal => 500,
        }
    }
}

/// Error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(kind: ErrorKind, code: &str, message: impl Into<String>) -> Self {
        ApiError { kind, code: code.to_string(), message: message.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Malformed, "malformed", message)
    }

    pub fn unknown_mission(id: &str) -> Self {
        Self::new(ErrorKind::NotFound, "unknown_mission", format!("no mission {id}"))
    }

    pub fn io(e: std::io::Error) -> Self {
        Self::new(ErrorKind::Internal, "io", e.to_string())
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.kind.status(), self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let kind = match e.class() {
            ErrorClass::NotFound => ErrorKind::NotFound,
            ErrorClass::Conflict => ErrorKind::Conflict,
            ErrorClass::Invalid => ErrorKind::Invalid,
        };
        let detail = match &e {
            EngineError::IllegalTransition { task, from, to } => {
                serde_json::json!({ "task_id": task, "from": from, "to": to })
            }
            EngineError::NotResponsible { task, responsible, actor } => {
                serde_json::json!({ "task_id": task, "responsible": responsible, "actor": actor })
            }
            EngineError::MissingBinding(keys) => serde_json::json!({ "missing": keys }),
            _ => Value::Null,
        };
        ApiError::new(kind, e.code(), e.to_string()).with_detail(detail)
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Log(inner) => ApiError::new(ErrorKind::Internal, "corrupt_log", inner.to_string()),
            AnalysisError::MissingHeader => ApiError::new(ErrorKind::Invalid, "missing_header", e.to_string()),
            AnalysisError::NoSamples => ApiError::new(ErrorKind::Invalid, "no_samples", e.to_string()),
            AnalysisError::Telemetry(_) => ApiError::new(ErrorKind::Invalid, "bad_telemetry", e.to_string()),
        }
    }
}
