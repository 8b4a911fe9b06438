use std::fmt;

use diq_core::data::DataError;
use diq_core::flops::FlopsError;
use diq_core::harness::HarnessError;
use diq_core::influence::{CheckpointFileError, InfluenceError};
use diq_core::select::SelectError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Io,
    Validation,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Io => 1,
            Kind::Validation => 2,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub kind: Kind,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub orphan: Vec<String>,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        Self::new(Kind::Io, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(Kind::Validation, message)
    }

    fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            missing: Vec::new(),
            orphan: Vec::new(),
        }
    }

    /// Prefixes the message with where the failure happened.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let kind = if e.is_io() { Kind::Io } else { Kind::Validation };
        CliError::new(kind, e.to_string())
    }
}

impl From<CheckpointFileError> for CliError {
    fn from(e: CheckpointFileError) -> Self {
        let kind = if e.is_io() { Kind::Io } else { Kind::Validation };
        CliError::new(kind, e.to_string())
    }
}

impl From<InfluenceError> for CliError {
    fn from(e: InfluenceError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<FlopsError> for CliError {
    fn from(e: FlopsError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::Incomplete { missing, orphan } => {
                let mut parts = Vec::new();
                if !missing.is_empty() {
                    parts.push(format!("no score for {}", missing.join(", ")));
                }
                if !orphan.is_empty() {
                    parts.push(format!("scores for unknown ids {}", orphan.join(", ")));
                }
                CliError {
                    kind: Kind::Validation,
                    message: format!("score table does not match dataset: {}", parts.join("; ")),
                    missing,
                    orphan,
                }
            }
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Data(d) => d.into(),
            other => CliError::validation(other.to_string()),
        }
    }
}
