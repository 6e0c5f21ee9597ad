use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("component {component} is degenerate (mass {mass:.3e}){}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    DegenerateComponent {
        component: usize,
        mass: f64,
        iteration: Option<usize>,
    },

    #[error("insufficient data: need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },

    #[error("non-finite value at record {row}")]
    NonFinite { row: usize },

    #[error("empty dictionary")]
    EmptyDictionary,

    #[error("all scanned clusters are empty")]
    NoCandidates,

    #[error("singular {0}×{0} system in Cayley retraction")]
    SingularRetraction(usize),

    #[error("matrix columns are not orthonormal (‖XᵀX − I‖_F = {0:.3e})")]
    NotOrthonormal(f64),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the inputs' shape
    /// or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateComponent { .. }
                | Error::SingularRetraction(_)
                | Error::InsufficientData { .. }
                | Error::NoCandidates
        )
    }
}
