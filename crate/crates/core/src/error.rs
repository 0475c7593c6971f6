use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid chart: {0}")]
    Chart(String),
    #[error("invalid metric: {0}")]
    Metric(String),
    #[error("singular metric at r = {r}")]
    Singular { r: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("decay estimate undefined: {0}")]
    Decay(String),
    /// Decay or integrability hypothesis for a finite mass not met.
    #[error("hypothesis gate refused: {0}")]
    Gate(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
