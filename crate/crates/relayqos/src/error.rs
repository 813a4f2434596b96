//! Error taxonomy shared by every module in the crate.

/// Crate-wide error type.
///
/// Contract violations that a caller can trigger with bad data are reported
/// through these variants rather than panics; panics are reserved for
/// internal invariant breakage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input: bad dimensions, values outside their documented
    /// range, unknown names, unparsable text.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested stream count exceeds what the channel pair supports.
    #[error("requested {requested} streams but the channel pair supports {rank} (rank tolerance {tol:.1e})")]
    InfeasibleDimension {
        requested: usize,
        rank: usize,
        tol: f64,
    },

    /// A scalar argument left the mathematical domain of the curve.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver stopped without meeting its residual target.
    /// Carries the last iterate so the caller can inspect how far it got.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    /// A candidate allocation violates a prefix (partial-sum) constraint.
    #[error("infeasible allocation: prefix constraint {index} violated by {violation:.3e}")]
    Infeasible { index: usize, violation: f64 },

    /// A numerical precondition failed (lost bracket, indefinite matrix, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The operation is outside the supported envelope (e.g. exhaustive
    /// search above its dimension cap).
    #[error("capability error: {0}")]
    Capability(String),

    /// Filesystem failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by argument validators.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Shorthand for domain violations.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
