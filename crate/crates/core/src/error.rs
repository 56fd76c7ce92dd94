use num_complex::Complex64;
use thiserror::Error;

use crate::triple::TripleReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inadmissible input: {reason}")]
    Inadmissible {
        reason: String,
        report: Option<Box<TripleReport>>,
    },

    #[error("failed to generate an admissible triple after {attempts} attempts (n = {n}, N = {big_n})")]
    GenerationFailure { n: usize, big_n: usize, attempts: usize },

    #[error("singular Miwa shift: c = {c} is (numerically) an eigenvalue of B")]
    SingularShift { c: Complex64 },

    #[error("value out of representable range: {0}")]
    Range(String),

    #[error("tau vanishes at or near the evaluation point: {0}")]
    Pole(String),

    #[error("indeterminate scale: all terms below 1e-300")]
    IndeterminateScale,

    #[error("degenerate spectrum: {0}; try new random parameters")]
    DegenerateSpectrum(String),

    #[error("interpolation geometry failure: {0}")]
    Geometry(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
