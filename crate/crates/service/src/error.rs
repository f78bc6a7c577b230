use std::fmt;

use serde::{Deserialize, Serialize};

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceError {
    Engine(nlstat_core::Error),
    NoDataset,
    NoModel,
    UnsupportedChart(String),
    SessionNotFound(String),
    BadRequest(String),
    Migration(String),
    DanglingReference(String),
    Storage(String),
}

impl ServiceError {
    pub fn class(&self) -> &'static str {
        match self {
            ServiceError::Engine(e) => e.class(),
            ServiceError::NoDataset => "NoDatasetError",
            ServiceError::NoModel => "NoModelError",
            ServiceError::UnsupportedChart(_) => "UnsupportedChartError",
            ServiceError::SessionNotFound(_) => "SessionNotFoundError",
            ServiceError::BadRequest(_) => "BadRequestError",
            ServiceError::Migration(_) => "MigrationError",
            ServiceError::DanglingReference(_) => "DanglingReferenceError",
            ServiceError::Storage(_) => "StorageError",
        }
    }

    /// Structured detail for the wire form, when the error carries any.
    pub fn detail(&self) -> serde_json::Value {
        use nlstat_core::Error as E;
        match self {
            ServiceError::Engine(E::Convergence { iterations, deviance_trace }) => {
                serde_json::json!({ "iterations": iterations, "deviance_trace": deviance_trace })
            }
            ServiceError::Engine(E::RankDeficient { column }) => serde_json::json!({ "column": column }),
            ServiceError::Engine(E::AmbiguousMention { mention, candidates }) => {
                serde_json::json!({ "mention": mention, "candidates": candidates })
            }
            ServiceError::Engine(E::Parse { row, .. }) => serde_json::json!({ "row": row }),
            _ => serde_json::Value::Null,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error_class: self.class().to_string(),
            message: self.to_string(),
            detail: self.detail(),
        }
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceError::Engine(e) => write!(f, "{e}"),
            ServiceError::NoDataset => write!(f, "no dataset has been uploaded to this session"),
            ServiceError::NoModel => write!(f, "no model has been fitted yet"),
            ServiceError::UnsupportedChart(msg) => write!(f, "unsupported chart: {msg}"),
            ServiceError::SessionNotFound(id) => write!(f, "no session with id '{id}'"),
            ServiceError::BadRequest(msg) => write!(f, "bad request: {msg}"),
            ServiceError::Migration(msg) => write!(f, "stored session cannot be loaded: {msg}"),
            ServiceError::DanglingReference(msg) => write!(f, "stored session refers to a missing dataset: {msg}"),
            ServiceError::Storage(msg) => write!(f, "storage error: {msg}"),
        }
    }
}

impl std::error::Error for ServiceError {}

impl From<nlstat_core::Error> for ServiceError {
    fn from(e: nlstat_core::Error) -> Self {
        ServiceError::Engine(e)
    }
}

/// Wire form of an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_class: String,
    pub message: String,
    pub detail: serde_json::Value,
}
