use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Numerator and denominator share a root (or the resultant is below the floor).
    #[error("degenerate map: relative resultant {resultant:e} below floor {floor:e}")]
    DegenerateMap { resultant: f64, floor: f64 },

    #[error("invalid degree {0}: maps must have degree at least 2")]
    InvalidDegree(usize),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    /// The derivative of the map vanishes (numerically) at the point.
    #[error("critical point: derivative underflows")]
    CriticalPoint,

    /// Simultaneous iteration did not reach the residual target.
    #[error("root finding failed at chain {chain:?}, step {step:?}: residuals {residuals:?}")]
    RootFindingFailure {
        residuals: Vec<f64>,
        chain: Option<usize>,
        step: Option<usize>,
    },

    #[error("no convergence after {iterations} iterations (tail bound {tail_bound:e})")]
    NonConvergence { iterations: usize, tail_bound: f64 },

    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("{flagged} of {total} samples hit critical points (limit 0.1%)")]
    TooManyCritical { flagged: usize, total: usize },

    #[error("degenerate range: {0}")]
    DegenerateRange(String),

    #[error("pole: argument is (numerically) a lattice point")]
    PoleAtLattice,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
