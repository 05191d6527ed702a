use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gradient requested at the zero vector")]
    ZeroVector,

    #[error("invalid convex body: {0}")]
    InvalidBody(String),

    #[error("invalid domain boundary: {0}")]
    InvalidDomain(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("degenerate normal: rho(nu) = {0}")]
    DegenerateNormal(f64),

    #[error("ray parameter {t} exceeds cut distance {cut}")]
    CutExceeded { t: f64, cut: f64 },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("input field is not rho-Lipschitz (worst violation {violation:e})")]
    NotLipschitz { violation: f64 },

    #[error("competitor violates the gradient constraint by {excess:e}")]
    InfeasibleCompetitor { excess: f64 },

    #[error("field does not vanish on the boundary (max |v| = {0:e})")]
    BoundaryViolation(f64),

    #[error("minimizer did not converge after {iterations} iterations (relative decrease {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("drive is not monotone on the queried piece [{t0}, {t1}]")]
    NonmonotonePiece { t0: f64, t1: f64 },

    #[error("penetration front is empty at level {0}")]
    EmptyFront(f64),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("grid shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
