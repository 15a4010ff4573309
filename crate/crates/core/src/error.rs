use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Rejection sampling gave up.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// The requested phase lies outside the hypotheses the verifier supports.
    #[error("unsupported phase: {0}")]
    UnsupportedPhase(String),

    /// An optimal assignment had to use a pair the cost is undefined on.
    #[error("infeasible pair: source {source_index} -> target {target_index}")]
    InfeasiblePair {
        source_index: usize,
        target_index: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
