use std::path::PathBuf;

use crate::value::VarId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates a structural invariant (unknown slot, overlapping spans, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("cannot interpret {0:?} as an instance count")]
    NotACount(String),

    #[error("variable {0} is not assigned")]
    Unassigned(VarId),

    #[error("unknown variable {0}")]
    UnknownVariable(VarId),

    #[error("solution count is capped at {cap} (below 101); raise the cap to bucket exactly")]
    CapTooSmall { cap: u64 },

    #[error("cannot aggregate over an empty result set")]
    EmptyResults,

    #[error("llm transport failure: {0}")]
    Transport(String),

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
