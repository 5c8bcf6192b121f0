use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0} (supported: 1 to 3)")]
    UnsupportedDimension(usize),
    #[error("invalid exponent q = {0}: q must be positive")]
    InvalidExponent(f64),
    #[error("target measure is supported on a hyperplane (smallest weighted singular value {0:e})")]
    HyperplaneSupported(f64),
    #[error("target measure has nonzero barycenter (norm {0:e}); enable auto_center or center it")]
    NonzeroBarycenter(f64),
    #[error("exact LP limited to {limit} variables, instance has {size}")]
    SizeExceeded { size: usize, limit: usize },
    #[error("dual solve did not converge after {iterations} iterations (max marginal error {gradient:e})")]
    DualNonconvergence { iterations: usize, gradient: f64 },
    #[error("unit mass unreachable on the grid (mass {mass:e} at the largest admissible c); enlarge the box")]
    MassUnreachable { mass: f64 },
    #[error("solver did not converge after {} iterations (residual {:e})", .0.diagnostics.iterations, .0.diagnostics.residual)]
    Nonconvergence(Box<SolveReport>),
    #[error("hemisphere construction requires q = 2, got WrongExponent q = {0}")]
    WrongExponent(f64),
    #[error("solution is not converged")]
    NotConverged,
    #[error("origin is not in the interior of the polygon")]
    OriginOutside,
    #[error("polygon is not convex")]
    NotConvex,
    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
