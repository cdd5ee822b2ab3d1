use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit codes:
/// config/composition -> 1, data/parse/load -> 2, everything else -> 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch: {detail}")]
    Dim { op: &'static str, detail: String },

    #[error("{op}: index {index} out of range (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at {path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("composition error: {0}")]
    Composition(String),

    #[error("cache invalid: {0}")]
    CacheInvalid(String),

    #[error("training error: {0}")]
    Train(String),

    #[error("load error: {0}")]
    Load(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit status for the CLI: 0 success, 1 config, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Composition(_) => 1,
            Error::Data(_) | Error::Parse { .. } | Error::Load(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
