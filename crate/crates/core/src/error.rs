use std::io;

use thiserror::Error;

/// A rejected input line, kept so callers can report all problems at once.
#[derive(Debug, Clone, PartialEq)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("corpus contains no usable paths")]
    EmptyCorpus,

    #[error("all {} data lines were rejected (first: {})", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    AllLinesRejected(Vec<LineDiagnostic>),

    #[error("markov order must be at least 1, got {0}")]
    InvalidOrder(usize),

    #[error("no path is long enough for order {order}")]
    NoUsableWindows { order: usize },

    #[error("state {0} is dangling")]
    Dangling(u32),

    #[error("distribution support mismatch: p has mass on {0} where q has none")]
    SupportMismatch(u32),

    #[error("target state count {requested} outside [{min}, {max}]")]
    StateCountOutOfRange {
        requested: usize,
        min: usize,
        max: usize,
    },

    #[error("cannot split {population} units into {k} folds")]
    TooManyFolds { k: usize, population: usize },

    #[error("validation corpus has no flow that projects onto the training model")]
    NoProjectableFlow,

    #[error("only {valid} of {k} folds were valid at r = {r}")]
    TooFewValidFolds { r: usize, valid: usize, k: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("classification covers none of the flow")]
    ZeroCoverage,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Format { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
