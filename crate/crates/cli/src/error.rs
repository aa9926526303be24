//! CLI error type and its machine-readable rendering.

use serde_json::json;
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::dataset::DatasetError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, files or records. Exit code 2.
    #[error("{message}")]
    Input { code: &'static str, message: String },
    /// A broken internal invariant. Exit code 3.
    #[error("{message}")]
    Internal { message: String },
}

impl CliError {
    pub fn input(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Input {
            code,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError::Internal {
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Internal { .. } => 3,
        }
    }

    /// Single-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let (kind, code, message) = match self {
            CliError::Input { code, message } => ("input", *code, message.as_str()),
            CliError::Internal { message } => ("internal", "internal", message.as_str()),
        };
        json!({ "error": { "kind": kind, "code": code, "message": message } }).to_string()
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::Io { .. } => "io",
            DatasetError::Schema { .. } | DatasetError::DuplicateId { .. } => "schema",
            DatasetError::InvalidGold { .. } => "invalid_gold",
        };
        CliError::input(code, e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::input("spec_infeasible", e.to_string())
    }
}
