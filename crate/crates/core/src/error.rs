use thiserror::Error;

use crate::form_tensors::Mode;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("unsupported element: dimension {dim}, degree {degree}")]
    UnsupportedElement { dim: usize, degree: usize },

    #[error("degenerate cell: |det| = {det:e}")]
    DegenerateCell { det: f64 },

    #[error("coefficient `{name}` has {got} values, expected {expected}")]
    CoefficientArity {
        name: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("mode mismatch: operation requires {expected} mode, got {got}")]
    ModeMismatch { expected: Mode, got: Mode },

    #[error("inconsistent program: {0}")]
    InconsistentProgram(String),

    #[error("integer overflow while {0}")]
    Overflow(&'static str),

    #[error("time budget of {budget_secs} s exceeded during {phase}")]
    BudgetExceeded { phase: &'static str, budget_secs: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("mesh resolution must be at least 1, got {0}")]
    InvalidMesh(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
