use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point projects behind the camera (depth {depth:e})")]
    BehindCamera { depth: f64 },

    #[error("degenerate projection: projected box has zero width or height")]
    DegenerateProjection,

    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),

    #[error("back-projected point lies at infinity")]
    PointAtInfinity,

    #[error("degenerate box: zero or negative volume")]
    DegenerateBox,

    #[error("covariance is not positive semi-definite")]
    NotPositiveDefinite,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
