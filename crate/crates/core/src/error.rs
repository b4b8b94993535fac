use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input for {0}")]
    NonFinite(&'static str),
    #[error("{name} must be {requirement}, got {value}")]
    OutOfRange {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("orientation axis is not a unit vector (norm {0})")]
    NonUnitAxis(f64),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(name))
    }
}
