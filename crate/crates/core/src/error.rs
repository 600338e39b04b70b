use nalgebra::DMatrix;
use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {what} (distance from algebra span {distance:e})\n{matrix}")]
    NotInAlgebra {
        what: String,
        distance: f64,
        matrix: DMatrix<f64>,
    },

    #[error("group membership violated ({predicate}): defect {defect:e}")]
    NotInGroup { predicate: String, defect: f64 },

    #[error("matrix is not invertible{}", at.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    Singular { at: Option<f64> },

    #[error("chart domain violated: norm {norm} exceeds chart radius {radius}")]
    ChartDomain { norm: f64, radius: f64 },

    #[error("quadrature did not converge: achieved estimate {achieved:e} with {panels} panels")]
    Quadrature { achieved: f64, panels: usize },

    #[error("stepper did not converge after {steps} steps (last change {last_change:e})")]
    Convergence {
        steps: usize,
        last_change: f64,
        last_iterate: DMatrix<f64>,
    },

    #[error("argument error: {0}")]
    Argument(String),

    #[error("unknown identifier: {0}")]
    Lookup(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}x{expected}, got {rows}x{cols}")]
    Dimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for LabError {
    fn from(err: serde_json::Error) -> Self {
        LabError::Parse(err.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(err: csv::Error) -> Self {
        LabError::Parse(err.to_string())
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
