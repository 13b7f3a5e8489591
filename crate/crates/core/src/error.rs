use thiserror::Error;

/// Errors produced by the solver stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("basis index {index} out of range (dimension {dim})")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("parameter {t} outside domain [{a}, {b}]")]
    OutsideDomain { t: f64, a: f64, b: f64 },

    #[error("spline domains do not match")]
    DomainMismatch,

    #[error("curve is not regular at t = {t}: parametric speed {speed:e}")]
    Irregular { t: f64, speed: f64 },

    #[error("invalid control points: {0}")]
    InvalidControlPoints(String),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("cell {index} of level {level} is not active")]
    CellNotActive { level: usize, index: usize },

    #[error("quasi-interpolation needs n >= p (n = {n}, p = {p})")]
    TooFewNodes { n: usize, p: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("theta out of range: {0}")]
    ThetaOutOfRange(f64),

    #[error("system matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("the direct approach needs a closed curve")]
    NotClosed,

    #[error("point is too close to the boundary (distance {distance:e})")]
    TooCloseToBoundary { distance: f64 },

    #[error("negative discrete energy {0:e}: assembly inconsistency")]
    NegativeEnergy(f64),

    #[error("convergence fit: {0}")]
    Fit(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
