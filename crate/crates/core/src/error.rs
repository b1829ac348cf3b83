use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The input carries no information the operation can use (zero variance, zero power).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A non-finite value showed up while sifting.
    #[error("non-finite value during sift iteration {iteration} of IMF {imf}")]
    Numeric { imf: usize, iteration: usize },

    /// More artificial trials (or substitutions) were requested than the pool admits.
    #[error("capacity exceeded: requested {requested}, at most {bound} available ({context})")]
    Capacity {
        requested: u128,
        bound: u128,
        context: String,
    },

    /// A dataset or export file could not be parsed or violates its invariants.
    #[error("failed to load {}: {reason}", path.display())]
    Load { path: PathBuf, reason: String },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn load(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
