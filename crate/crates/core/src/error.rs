use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("play log is empty{}", context_suffix(.0))]
    EmptyLog(Option<String>),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("play at {instant} is later than the reference instant {t_max}")]
    InvalidTimestamp { instant: String, t_max: String },

    #[error("training diverged at epoch {epoch}: {reason}")]
    DivergedTraining { epoch: usize, reason: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("user `{0}` has no candidate songs left to recommend")]
    EmptyCandidates(String),

    #[error("nothing to evaluate: {0}")]
    EmptyEvaluation(String),

    #[error("invalid rating range: max {max} must exceed min {min}")]
    InvalidRange { max: f64, min: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn context_suffix(ctx: &Option<String>) -> String {
    match ctx {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn empty(ctx: impl Into<String>) -> Self {
        Error::EmptyLog(Some(ctx.into()))
    }

    /// True for failures of the numerical routines rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::DivergedTraining { .. })
    }
}
