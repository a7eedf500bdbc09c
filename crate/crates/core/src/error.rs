use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{ChallengeId, UserId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("embedding row has dimension {actual}, expected {expected} (line {line})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        line: usize,
    },

    #[error("duplicate key {0}")]
    DuplicateKey(String),

    #[error("no embedding for challenge {0}")]
    MissingEmbedding(ChallengeId),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("solver failed to converge after {iterations} iterations (gradient inf-norm {grad_norm:e})")]
    SolverFailure { iterations: usize, grad_norm: f64 },

    #[error("selection problem has no candidates")]
    EmptyCandidates,

    #[error("brute force supports at most {max} candidates, got {got}")]
    TooManyCandidates { max: usize, got: usize },

    #[error("interaction log is empty")]
    EmptyLog,

    #[error("no recommendation for user {user} in week {week}")]
    MissingRecommendation { user: UserId, week: u32 },

    #[error("no event carries a dimension bit")]
    NoTypedEvents,

    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("missing data file {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("policy {policy} failed in round {week}: {source}")]
    Round {
        policy: String,
        week: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid_config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// The innermost error, looking through round context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
