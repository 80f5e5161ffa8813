//! Crate-wide error type for recoverable failures.
//!
//! Shape and state violations (mismatched matrix dimensions, a backward pass
//! without a matching forward) are programmer errors and panic instead; see
//! the individual modules.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed IDX container (bad magic, unexpected dimension count).
    #[error("{0}")]
    IdxFormat(String),

    /// Structurally valid files that disagree with each other or with the
    /// label range.
    #[error("{0}")]
    DataConsistency(String),

    /// Bad key, unparsable value, or unknown activation in a config file or
    /// flag.
    #[error("config error: {0}")]
    Config(String),

    /// Required input files are absent; the message lists the expected
    /// names.
    #[error("{0}")]
    MissingData(String),

    /// Metrics CSV does not match the expected schema.
    #[error("{0}")]
    CsvSchema(String),

    /// Training produced a non-finite loss; the run is aborted so divergence
    /// stays visible instead of being masked.
    #[error("non-finite loss at epoch {epoch}, batch {batch}; aborting run")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// A finite-difference probe evaluated the objective to NaN or infinity.
    #[error("objective is not finite when perturbing component {component}")]
    NonFiniteEval { component: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
