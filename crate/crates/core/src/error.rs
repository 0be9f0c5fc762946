use std::path::PathBuf;

use thiserror::Error;

/// A structural problem found while checking a staging.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("level {level}: prefix {prefix} belongs to more than one stage")]
    Overlap { level: usize, prefix: usize },
    #[error("level {level}: prefix {prefix} is not covered by any stage")]
    Gap { level: usize, prefix: usize },
    #[error("level {level}: stage #{stage} is not the full set of prefixes agreeing with a context")]
    NonSubcube { level: usize, stage: usize },
    #[error("level {level}: stage #{stage} fixes variable {var}, which does not precede the level")]
    ContextOutOfPrefix { level: usize, stage: usize, var: usize },
    #[error("level {level}: prefix index {prefix} out of range")]
    PrefixOutOfRange { level: usize, prefix: usize },
    #[error("expected {expected} levels, found {found}")]
    LevelCount { expected: usize, found: usize },
    #[error("level {level}: stage #{stage} is empty")]
    EmptyStage { level: usize, stage: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variable: {0}")]
    InvalidVariable(String),
    #[error("invalid ordering: {0}")]
    InvalidOrdering(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("level {level} out of range for {p} variables")]
    LevelOutOfRange { level: usize, p: usize },
    #[error("invalid staging: {0}")]
    InvalidStaging(#[from] Violation),
    #[error("stage at level {level} with context {context} has zero marginal count")]
    UndefinedStage { level: usize, context: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("node sets passed to a separation query overlap")]
    OverlappingSets,
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("graphs have different node sets")]
    NodeSetMismatch,
    #[error("variable mismatch: {0}")]
    VariableMismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("search budget exceeded: {needed} candidates, limit {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("target {target} is not complete; offending node at level {level}, prefix {prefix:?}")]
    IncompleteTarget {
        target: String,
        level: usize,
        prefix: Vec<usize>,
    },
    #[error("invalid intervention target: {0}")]
    InvalidTarget(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Whether the error stems from bad input rather than a defect.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
