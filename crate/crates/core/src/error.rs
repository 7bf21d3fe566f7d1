use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown signal family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("interpolation needs strictly increasing abscissae and at least two finite points")]
    BadInterpolationData,
    #[error("tail fit needs at least 8 points in the window, got {0}")]
    TooFewPoints(usize),
    #[error("value {0} lies outside the open support ({1}, {2})")]
    OutsideSupport(f64, f64, f64),
    #[error("{0}")]
    Unsupported(String),
    #[error("solver did not converge (status {0})")]
    NotConverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;
