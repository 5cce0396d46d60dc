use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("site index {index} out of range for a space of {n_sites} sites")]
    SiteOutOfRange { index: usize, n_sites: usize },

    #[error("site index {0} listed more than once")]
    DuplicateSite(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("state is not normalized (norm or trace {0})")]
    NotNormalized(f64),

    #[error("operator is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("subsets overlap at site {0}")]
    Overlap(usize),

    #[error("outcome labels do not match: {0}")]
    LabelMismatch(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("disjointness condition violated: {0}")]
    DisjointnessViolated(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("search limit exceeded: {needed} evaluations requested, cap is {cap}")]
    LimitExceeded { needed: u128, cap: u128 },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("dense envelope exceeded: {0}")]
    Envelope(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
