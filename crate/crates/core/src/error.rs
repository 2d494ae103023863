use thiserror::Error;

/// Errors raised anywhere in the workbench.
///
/// The variants map onto the CLI exit-code classes: parameter, shape,
/// sampling and io problems are input errors, topology is a physics error
/// and convergence is a numerical one.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("singular detuning: {0}")]
    Singular(String),
    #[error("grid mismatch: {0}")]
    Shape(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("optimization error: {0}")]
    Optimization(String),
    #[error("stability error: {0}")]
    Stability(String),
    #[error("query outside the potential volume: {0}")]
    OutOfDomain(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("no oscillation: {0}")]
    NoOscillation(String),
    #[error("undefined fraction: {0}")]
    UndefinedFraction(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
