use thiserror::Error;

/// Errors raised by the toolkit. Verification failures are reported in
/// their own report types and never surface here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{what} index {index} out of range 0..={max}")]
    Index {
        what: &'static str,
        index: i64,
        max: i64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("spectral coverage error: relative mass {mass:.3e} beyond radius {radius}")]
    Coverage { radius: f64, mass: f64 },

    #[error("non-finite symbol value at {point:?}")]
    Evaluation { point: Vec<f64> },

    #[error("cost guard: {required} evaluations exceed the budget of {budget}")]
    CostGuard { required: u128, budget: u128 },

    #[error("quadrature resolution {points} below the floor {floor}")]
    Resolution { points: usize, floor: usize },

    #[error("slope fit: {0}")]
    Fit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
