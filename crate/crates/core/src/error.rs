use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StylerError {
    #[error("{0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("schema error: {entry}: {msg}")]
    Schema { entry: String, msg: String },
    #[error("non-finite value in loss term `{term}`")]
    Numeric { term: &'static str },
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid config field `{field}`: {msg}")]
    Config { field: &'static str, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Tensor(#[from] styler_grad::Error),
}

impl StylerError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn schema(entry: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::Schema { entry: entry.into(), msg: msg.into() }
    }

    pub fn config(field: &'static str, msg: impl Into<String>) -> Self {
        Self::Config { field, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, StylerError>;
