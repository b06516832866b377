use thiserror::Error;

use crate::admm::SolveTrace;
use crate::C64;

pub type Result<T> = std::result::Result<T, CoprError>;

#[derive(Debug, Error)]
pub enum CoprError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("cannot normalize measurements of an identically zero field")]
    ZeroField,

    #[error("normal matrix is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("l1 subproblem did not converge within {iterations} inner iterations")]
    InnerNotConverged { iterations: usize, best: Vec<C64> },

    #[error("numerical failure at iteration {iteration}: {reason}")]
    NumericalFailure {
        iteration: usize,
        reason: String,
        trace: Box<SolveTrace>,
    },

    #[error("outer iteration {outer} failed: {source}")]
    OuterFailure {
        outer: usize,
        #[source]
        source: Box<CoprError>,
        misfits: Vec<f64>,
    },

    #[error("piston alignment undefined for a zero estimate")]
    UndefinedAlignment,

    #[error("reconstructed field vanishes on the aperture")]
    DegenerateField,

    #[error("aperture mask is empty")]
    EmptyMask,

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoprError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CoprError::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(CoprError::DimensionMismatch {
                what,
                expected,
                got,
            })
        }
    }
}
