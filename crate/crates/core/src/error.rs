use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid pair ({0}, {1}): objects must be distinct and below n")]
    InvalidPair(usize, usize),

    #[error("value {0} outside [-1, 1]")]
    OutOfRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid clustering: {0}")]
    InvalidClustering(String),

    #[error("size guard exceeded: {0}")]
    TooLarge(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown acquisition strategy `{0}` (valid: uniform, maxmin, maxexp, imu-c, entropy, info-gain)")]
    UnknownStrategy(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
