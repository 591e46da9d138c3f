use thiserror::Error;

/// Errors raised across the closure toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("QR iteration did not converge for trailing block ending at row {row} after {iterations} sweeps")]
    Convergence { row: usize, iterations: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("degree {degree} outside supported range (max {max})")]
    Range { degree: usize, max: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("structure violation at ({row}, {col}): {reason}")]
    Structure {
        row: usize,
        col: usize,
        reason: String,
    },
    #[error("unsupported closure order {0}")]
    UnsupportedOrder(usize),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format version: {0}")]
    Version(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("solution blew up at t = {t:.6} (grid point {point}): {detail}")]
    BlowUp {
        t: f64,
        point: usize,
        detail: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
