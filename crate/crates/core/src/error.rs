use std::path::PathBuf;

/// Errors produced by the toolchain.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// A compiled or trained model is internally inconsistent (missing route,
    /// TCAM miss, unknown subtree id).
    #[error("model integrity error: {0}")]
    ModelIntegrity(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid interval [{lo}, {hi}] for width {width}")]
    InvalidInterval { lo: u64, hi: u64, width: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn integrity(msg: impl Into<String>) -> Self {
        Error::ModelIntegrity(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
