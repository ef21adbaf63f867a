use std::path::PathBuf;

use thiserror::Error;

use crate::sensor::SensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "constrained exploration stalled at iteration {iteration}: no move above \
         log-likelihood {floor} in {proposals} proposals"
    )]
    ExplorationStalled {
        iteration: usize,
        floor: f64,
        proposals: usize,
    },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("candidate grid is empty (spacing {spacing} cm)")]
    EmptyGrid { spacing: f64 },

    #[error(transparent)]
    Sensor(#[from] SensorError),

    #[error("malformed {what} at {path}:{line}: {reason}")]
    Parse {
        what: &'static str,
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
