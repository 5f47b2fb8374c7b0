use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The linear solve behind a resolvent detected rank deficiency, so the
    /// shift point lies in (or numerically on) the spectrum.
    #[error("singular resolvent at lambda = {re} + {im}i")]
    SingularResolvent { re: f64, im: f64 },

    #[error("eigenvalue {re} + {im}i lies on the branch cut (-inf, 0]")]
    BranchCutViolation { re: f64, im: f64 },

    #[error("|kappa| = {kappa_abs} does not exceed the growth bound {growth_bound}")]
    ShiftTooSmall { kappa_abs: f64, growth_bound: f64 },

    #[error("invalid contour: {0}")]
    InvalidContour(String),

    #[error("trapezoidal quadrature did not converge: gap {gap:e} > tol {tol:e} at {nodes} nodes")]
    NoConvergence { gap: f64, tol: f64, nodes: usize },

    #[error("logarithm of zero")]
    ZeroArgument,

    #[error("time {time} outside the horizon [-{horizon}, {horizon}]")]
    OutOfHorizon { time: f64, horizon: f64 },

    #[error("kappa margin must exceed 1, got {0}")]
    BadMargin(f64),

    #[error("finite-difference step {0:e} is too small")]
    StepTooSmall(f64),

    #[error("generator does not commute with its evolution family")]
    CommutationViolated,

    #[error("exponential series bound not met after {terms} terms (norm {norm})")]
    SeriesNotConverged { terms: usize, norm: f64 },

    #[error("Duhamel quadrature exceeded {panels} panels")]
    QuadratureStall { panels: usize },

    #[error("ODE step size underflow at t = {0}")]
    StepUnderflow(f64),

    #[error("trajectory grid unusable for finite differences: {0}")]
    GridTooCoarse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at `{field}`: {message}")]
    SchemaViolation { field: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
