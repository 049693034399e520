use std::fmt;

use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Validation,
    Numeric,
    Resource,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 1,
            ErrorKind::Numeric => 2,
            ErrorKind::Resource => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    pub violations: Vec<Violation>,
    pub position: Option<(usize, usize)>,
}

impl CliError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            violations: Vec::new(),
            position: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, message)
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Numeric, message)
    }

    pub fn resource(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Resource, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Single-line JSON for the error stream.
    pub fn to_json(&self) -> String {
        let mut body = json!({
            "kind": self.kind,
            "exit_code": self.exit_code(),
            "message": self.message,
        });
        if !self.violations.is_empty() {
            body["violations"] = json!(self.violations);
        }
        if let Some((line, column)) = self.position {
            body["line"] = json!(line);
            body["column"] = json!(column);
        }
        json!({ "error": body }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<gravcollapse::Error> for CliError {
    fn from(e: gravcollapse::Error) -> Self {
        let kind = match e {
            gravcollapse::Error::Domain(_) => ErrorKind::Validation,
            gravcollapse::Error::Numeric(_) => ErrorKind::Numeric,
            gravcollapse::Error::Resource(_) => ErrorKind::Resource,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let mut out = Self::validation(e.to_string());
        match e {
            ConfigError::Syntax { line, column, .. } => out.position = Some((line, column)),
            ConfigError::Schema(v) => out.violations = v,
        }
        out
    }
}
