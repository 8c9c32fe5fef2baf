use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A forward or backward pass produced NaN or infinity.
    #[error("numeric failure in `{op}`: {detail}")]
    Numeric { op: String, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    /// The story is too short for the requested perturbation.
    #[error("story {story_id} skipped: {reason}")]
    Skipped { story_id: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint does not match config (expected hash {expected}, found {found})")]
    HashMismatch { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::HashMismatch { .. } => 2,
            Error::Data(_) | Error::EmptyInput(_) | Error::Json(_) | Error::Skipped { .. } => 3,
            Error::Numeric { .. } => 4,
            Error::Io { .. } => 5,
            Error::Contract(_) | Error::UndefinedCorrelation(_) => 1,
        }
    }
}
