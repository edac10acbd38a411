use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Parameters are individually valid but violate a structural constraint
    /// (for example a sparsity that does not divide the number of rows).
    #[error("structural parameter error: {0}")]
    Structural(String),

    #[error("index {index} out of range for field modulus {modulus}")]
    Range { index: u64, modulus: u64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is rank deficient: numerical rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("basis is not orthonormal: ||U^T U - I||_F = {deviation:.3e}")]
    NotOrthonormal { deviation: f64 },

    #[error("trace moment of order {q} overflowed; use a smaller q")]
    Overflow { q: usize },

    #[error("dense materialization of {rows}x{cols} exceeds the cap of {cap} entries")]
    MemoryCap { rows: usize, cols: usize, cap: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid sketch file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// True for errors caused by unreadable or malformed input rather than
    /// by invalid parameters.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Format(_) | Error::Io(_) | Error::Json(_)
        )
    }
}
