use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("kernel evaluated on its singular set (zero distance)")]
    SingularKernel,
    #[error("quadrature did not converge: value {value}, previous {previous}")]
    QuadratureNonConvergence { value: f64, previous: f64 },
    #[error("unsupported dimension {0} for this operation")]
    UnsupportedDimension(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("root not found: {0}")]
    RootNotFound(String),
    #[error("line search failed after {shrinks} shrinks at iteration {iteration}")]
    LineSearchFailed { iteration: usize, shrinks: usize, energies: Vec<f64> },
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
    #[error("snapshot format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}

impl Error {
    /// Stable short name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid-params",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidArgument { .. } => "invalid-argument",
            Error::SingularKernel => "singular-kernel",
            Error::QuadratureNonConvergence { .. } => "quadrature-nonconvergence",
            Error::UnsupportedDimension(_) => "unsupported-dimension",
            Error::Precondition(_) => "precondition",
            Error::RootNotFound(_) => "root-not-found",
            Error::LineSearchFailed { .. } => "line-search-failed",
            Error::UnknownCheck(_) => "unknown-check",
            Error::Format(_) => "format",
        }
    }
}
