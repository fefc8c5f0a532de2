use thiserror::Error;

use crate::field::Point;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression error at byte {pos}: {msg}")]
    Expression { pos: usize, msg: String },

    #[error("step size underflow at t = {t}; last valid state {state:?}")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("integration horizon {requested} exceeds configured limit {limit}")]
    HorizonExceeded { requested: f64, limit: f64 },

    #[error("splitting did not converge: {0}")]
    NoConvergence(String),

    #[error("splitting residual {residual:.3e} above tolerance {tol:.3e}; rates would be meaningless")]
    SplittingResidual { residual: f64, tol: f64 },

    #[error("smoothing bounds unattainable: sup|f - g| = {value_bound:.3e}, sup|X.f - X.g| = {derivative_bound:.3e}, eps = {eps:.3e}")]
    SmoothingBounds {
        value_bound: f64,
        derivative_bound: f64,
        eps: f64,
    },

    #[error("approximation conditions violated: cond1 margin {cond1:.3e}, cond2 margin {cond2:.3e}")]
    ConditionMargins { cond1: f64, cond2: f64 },

    #[error("form is not contact near {point:?} (density {density:.3e})")]
    NotContact { point: Point, density: f64 },

    #[error("plane field does not contain the flow direction near {point:?} (|alpha(X)| = {value:.3e})")]
    NotSupporting { point: Point, value: f64 },

    #[error("orientation misconfiguration: {0}")]
    Orientation(String),

    #[error("dynamical sign precondition violated at {point:?}")]
    DynamicalSign { point: Point },

    #[error("degenerate point {point:?}: {msg}")]
    Degenerate { point: Point, msg: String },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("liouville precondition failed: {0}")]
    Liouville(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
