use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("density operations require s in (0, 1/2), got s = {0}")]
    DensityRange(f64),
    #[error("cell index {index} out of bounds for grid with {cells} cells")]
    IndexOutOfBounds { index: usize, cells: usize },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("value {value} outside declared range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("exterior data is not compactly supported")]
    NonCompact,
    #[error("exterior data has no limit at infinity: {0}")]
    DivergentTail(String),
    #[error("empty set")]
    EmptySet,
    #[error("sequence hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("no admissible constant down to {0:e}")]
    NoAdmissibleConstant(f64),
    #[error("potential evaluation failed at t = {0}")]
    PotentialUndefined(f64),
    #[error("radius {radius} exceeds the grid box (half-width {half_width})")]
    RadiusTooLarge { radius: f64, half_width: f64 },
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("inequality link violated: {0}")]
    LinkViolation(String),
    #[error("serialization: {0}")]
    Serde(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
