use thiserror::Error;

/// Errors raised by the construction, evaluation and verification layers.
///
/// Verification *failures* are never errors: they are entries in a report.
/// Variants here mean that a query could not be answered at all.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sidelength {part} does not divide {whole}")]
    Divisibility { part: i128, whole: i128 },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration did not converge after {cells} cells (last estimate {estimate})")]
    Integration { estimate: f64, cells: u64 },

    #[error("construction invariant violated: {0}")]
    Invariant(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Coverage, capacity and budget problems are operational: the query was
    /// well formed but the built levels or configured caps cannot serve it.
    pub fn is_operational(&self) -> bool {
        matches!(
            self,
            Error::Capacity(_) | Error::Integration { .. } | Error::Io(_) | Error::Invariant(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
