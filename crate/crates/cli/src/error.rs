use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: sfc_core::Error,
    },

    #[error("{0} of the requested runs failed")]
    PartialFailure(usize),

    #[error(transparent)]
    Core(#[from] sfc_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
