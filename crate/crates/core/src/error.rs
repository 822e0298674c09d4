use thiserror::Error;

/// Unified error type for grid construction, operator preconditions, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid shape or indexing violation.
    #[error("grid error: {0}")]
    Grid(String),

    /// A numeric parameter outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An operator precondition that must hold on the sampled data.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Input data fails a required Lipschitz certificate.
    #[error("data is not {bound}-Lipschitz: quotient {measured} at node pair ({a}, {b})")]
    NotLipschitz {
        bound: f64,
        measured: f64,
        a: usize,
        b: usize,
    },

    /// Malformed LFN stream.
    #[error("lfn format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
