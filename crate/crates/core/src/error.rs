use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("enumeration refused: {players} players exceeds the cap of {cap} ({cost} utility evaluations)")]
    EnumerationRefused { players: usize, cap: usize, cost: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate group-testing plan: q_tot = {q_tot} must be < 1")]
    DegeneratePlan { q_tot: f64 },

    #[error("utility oracle failed: {0}")]
    Oracle(String),

    #[error("estimation aborted after {completed} of {total} samples: {source}")]
    Aborted {
        completed: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid coalition: {0}")]
    Coalition(String),

    #[error("training diverged at round {round}, participant {participant}")]
    Divergence { round: usize, participant: u32 },

    #[error("training error: {0}")]
    Training(String),

    #[error("layout mismatch: expected {expected} parameters, found {found}")]
    LayoutMismatch { expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{path}: format error at byte {offset}: {message}")]
    Format { path: PathBuf, offset: u64, message: String },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
