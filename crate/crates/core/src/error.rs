use std::path::PathBuf;

/// Errors surfaced by the evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("tau is undefined: chance risk is zero (pi = {pi})")]
    UndefinedTau { pi: f64 },

    #[error("composition violation: sample space `{0}` appears more than once")]
    CompositionViolation(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("invalid provider: {0}")]
    InvalidProvider(String),

    #[error("provider error for `{id}`: {message}")]
    Provider { id: String, message: String },

    #[error("{failed} of {total} samples failed, above the failure limit {limit}")]
    FailureLimit {
        failed: usize,
        total: usize,
        limit: f64,
        failures: Vec<(String, String)>,
    },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("missing binding for placeholder `{{{0}}}`")]
    MissingBinding(String),

    #[error("duplicate record ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 provider failure beyond limit, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider { .. } | Error::FailureLimit { .. } => 2,
            Error::Verification(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
