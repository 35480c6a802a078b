use serde::Serialize;
use serde_json::{json, Value};

use sectorial::Error;

pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Machine-readable reason for a nonzero exit, written to `failure.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub exit_code: i32,
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { exit_code: EXIT_CONFIG, kind: "configuration", message: message.into(), details: Value::Null }
    }

    pub fn numerical(kind: &'static str, message: impl Into<String>) -> Self {
        Self { exit_code: EXIT_NUMERICAL, kind, message: message.into(), details: Value::Null }
    }

    pub fn tolerance(message: impl Into<String>, details: Value) -> Self {
        Self { exit_code: EXIT_TOLERANCE, kind: "tolerance", message: message.into(), details }
    }

    pub fn io(e: std::io::Error) -> Self {
        Self { exit_code: EXIT_CONFIG, kind: "io", message: e.to_string(), details: Value::Null }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    /// Numerical guards map to exit 3, everything else is a bad input.
    pub fn from_core(e: Error) -> Self {
        let message = e.to_string();
        let details = match &e {
            Error::ContourNode { index, z, t, .. } => json!({ "node": index, "z": [z.re, z.im], "t": t }),
            _ => Value::Null,
        };
        let base = match e.root() {
            Error::NonContraction { .. } => Self::numerical("non-contraction", ""),
            Error::Unresolved { .. } => Self::numerical("kernel unresolved", ""),
            Error::Overflow { .. } | Error::Quadrature(_) | Error::SingularKernel => Self::numerical("numerical", ""),
            Error::SizeCap { .. } => Self::numerical("size cap", ""),
            Error::Io(_) => Self { kind: "io", ..Self::config("") },
            _ => Self::config(""),
        };
        Self { message, details, ..base }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e)
    }
}
