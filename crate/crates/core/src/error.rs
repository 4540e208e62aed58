use alloc::string::String;
use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("function `{name}` at byte {offset} expects {expected} argument(s), got {found}")]
    Arity {
        offset: usize,
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("exponent p = {p} outside the admissible range (1, {upper}) for n = {n}")]
    ExponentRange { p: f64, n: usize, upper: f64 },
    #[error("shooting failed: {0}")]
    Shooting(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("matrix not positive definite at row {0}")]
    NotPositiveDefinite(usize),
    #[error("singular bordered system (smallest singular value estimate {sigma_min:.3e}): {message}")]
    SingularSystem { sigma_min: f64, message: String },
    #[error("eigensolver did not converge after {iterations} steps")]
    Eigensolver { iterations: usize },
    #[error("contraction failed: |N(0)| = {n0:.3e}, last step {last_step:.3e}; try a smaller epsilon")]
    Contraction { n0: f64, last_step: f64 },
    #[error("spectral gap failure: {0}")]
    Gap(String),
    #[error("Newton iteration diverged: {0}")]
    Divergence(String),
    #[error("converged to the trivial solution u = 0")]
    TrivialSolution,
    #[error("solution is not positive (min u = {min:.3e})")]
    NotPositive { min: f64 },
    #[error("transversality failure on face {face}: margin {margin:.3e}")]
    Transversality { face: String, margin: f64 },
    #[error("flow escaped the block through an entrance face at {0}")]
    Escape(String),
    #[error("unsupported topology: {0}")]
    Topology(String),
    #[error("invalid delta: boundary infimum {boundary_inf:.6e} is not above interior supremum {interior_sup:.6e}")]
    InvalidDelta { boundary_inf: f64, interior_sup: f64 },
    #[error("insufficient schedule: need at least {needed} epsilon values, got {found}")]
    Schedule { needed: usize, found: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;
