// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("image {image_id}: box {index}: {reason}")]
    MalformedBox {
        image_id: String,
        index: usize,
        reason: String,
    },

    #[error("combination space too small: requested {requested} prompts, only {available} distinct ({shortfall} short)")]
    InsufficientSpace {
        requested: usize,
        available: usize,
        shortfall: usize,
    },

    /// Two inputs that must describe the same id set do not.
    #[error("inconsistent inputs: {context}: {}", ids.join(", "))]
    Mismatch { context: String, ids: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by two inputs disagreeing with each other rather
    /// than by any single input being malformed.
    pub fn is_consistency(&self) -> bool {
        matches!(self, Error::Mismatch { .. })
    }
}
