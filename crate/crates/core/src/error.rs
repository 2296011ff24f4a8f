use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library.
///
/// Variants are grouped by category so that callers (notably the CLI) can
/// map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A mathematical precondition failed (e.g. a non-PSD covariance,
    /// a parameter outside its box, a pair that is not flow-connected).
    #[error("domain error: {0}")]
    Domain(String),

    /// The dependence kernel produced a covariance matrix that is not
    /// positive semi-definite within tolerance.
    #[error("invalid kernel: smallest eigenvalue {min_eigenvalue:.3e} below tolerance {tolerance:.3e}")]
    KernelValidity { min_eigenvalue: f64, tolerance: f64 },

    /// Estimation could not proceed (too few exceedances, degenerate data).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// The optimizer failed to converge.
    #[error("optimizer did not converge after {evaluations} evaluations: {message}")]
    Convergence {
        message: String,
        evaluations: usize,
        /// Best objective values seen, one per restart / stage.
        trace: Vec<f64>,
    },

    /// A level or threshold lies outside the range where the asymptotic
    /// tail approximation is usable.
    #[error("out of range: {0}")]
    Range(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let msg = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => Error::Parse(msg),
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
