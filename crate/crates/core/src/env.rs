//! The boundary between the runtime and the services it drives.

use std::fmt;
use std::future::Future;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Classes of failure a tool call can report.
///
/// Retry policies and idempotency helpers key off the class, never the message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    UnknownTool,
    BadRequest,
    BadFilter,
    NotFound,
    AlreadyExists,
    ParentNotFound,
    FolderNotFound,
    Conflict,
    PermissionDenied,
    RateLimited,
    TransientUnavailable,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::UnknownTool => "unknown_tool",
            ErrorClass::BadRequest => "bad_request",
            ErrorClass::BadFilter => "bad_filter",
            ErrorClass::NotFound => "not_found",
            ErrorClass::AlreadyExists => "already_exists",
            ErrorClass::ParentNotFound => "parent_not_found",
            ErrorClass::FolderNotFound => "folder_not_found",
            ErrorClass::Conflict => "conflict",
            ErrorClass::PermissionDenied => "permission_denied",
            ErrorClass::RateLimited => "rate_limited",
            ErrorClass::TransientUnavailable => "transient_unavailable",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{class}: {message}")]
pub struct ToolError {
    pub class: ErrorClass,
    pub message: String,
}

impl ToolError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }
}

/// Something that executes named tools with structured arguments.
///
/// Implementations must tolerate concurrent calls through a shared reference;
/// the executor keeps several calls in flight at once.
pub trait Environment {
    fn call(&self, tool: &str, args: &Value) -> impl Future<Output = Result<Value, ToolError>>;
}

impl<E: Environment> Environment for &E {
    fn call(&self, tool: &str, args: &Value) -> impl Future<Output = Result<Value, ToolError>> {
        (**self).call(tool, args)
    }
}
