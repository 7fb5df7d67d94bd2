use thiserror::Error;

/// Errors produced by ensemble construction, model evaluation, integration
/// and the verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid ensemble: {0}")]
    Construction(String),

    #[error("non-finite value at atom {index}")]
    Evaluation { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("sampler failed at draw {index}: {reason}")]
    Sampler { index: usize, reason: String },

    #[error("no atoms left inside radius {radius}")]
    EmptySupport { radius: f64 },

    #[error("state norm {norm:e} exceeds overflow guard")]
    Overflow { norm: f64 },

    #[error("integration failed at step {step}: {source}")]
    Integration {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory for atom {atom} failed: {source}")]
    Atom {
        atom: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time {0} is not a node of the grid")]
    OffGrid(f64),

    #[error("node index {index} outside grid with {nodes} nodes")]
    NodeIndex { index: usize, nodes: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("validation failed: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
