// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Errors produced by tensor math, bending, generation, and sweep orchestration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not agree.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A parameter is outside the domain accepted by an operation.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed range, token target, or other textual spec.
    #[error("parse error: {0}")]
    Parse(String),

    /// A configuration field failed validation; `path` is the dotted field path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// An explicit token target names a word absent from the prompt.
    #[error("token `{word}` does not occur in prompt tokens {available:?}")]
    TokenNotFound { word: String, available: Vec<String> },

    /// A post-softmax row sums to (almost) zero and cannot be renormalized.
    #[error("degenerate attention row {row}: sum {sum:e}")]
    DegenerateRow { row: usize, sum: f64 },

    /// Filesystem failure, annotated with the offending path.
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("yaml error: {0}")]
    Yaml(#[from] serde_yaml::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
