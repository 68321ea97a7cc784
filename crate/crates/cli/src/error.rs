use relcluster_core::analysis::AnalysisError;
use relcluster_core::clustering::ClusterError;
use relcluster_core::corpus::CorpusError;
use relcluster_core::encoder::{BackendError, CacheError, EncodeError};
use relcluster_core::evalmetrics::MetricError;
use relcluster_core::prompt::PromptError;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Io,
    Validation,
    Backend,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Io => "io",
            ErrorKind::Validation => "validation",
            ErrorKind::Backend => "backend",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage | ErrorKind::Io => 2,
            ErrorKind::Validation => 3,
            ErrorKind::Backend => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Io, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, message)
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Backend, message)
    }

    /// `{"error":{"kind":..,"message":..}}`
    pub fn to_json(&self) -> String {
        json!({"error": {"kind": self.kind.as_str(), "message": self.message}}).to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        match e {
            CacheError::Io { .. } => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        Self::backend(e.to_string())
    }
}

impl From<EncodeError> for CliError {
    fn from(e: EncodeError) -> Self {
        match e {
            EncodeError::Matrix(_) => Self::validation(e.to_string()),
            _ => Self::backend(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Backend { .. } => Self::backend(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}
