use thiserror::Error;

/// Errors raised by map construction, iteration and the various checkers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {x} is within tolerance of breakpoint {breakpoint}")]
    BreakpointHit { x: f64, breakpoint: f64 },

    #[error("orbit hit a breakpoint at step {step}")]
    OrbitTruncated { step: usize, orbit: Vec<f64> },

    #[error("refinement would exceed the cell-count guard ({cells} cells requested)")]
    CellCountExceeded { cells: f64 },

    #[error("bracketed inverse failed on cell ({left}, {right}) for target {target}: {reason}")]
    RootSolveFailure {
        left: f64,
        right: f64,
        target: f64,
        reason: &'static str,
    },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("parameter {a} outside the parameter interval [{lo}, {hi}]")]
    ParameterOutOfRange { a: f64, lo: f64, hi: f64 },

    #[error("parameter {a} is within tolerance of a smoothness boundary of xi_{j}")]
    NonSmoothPoint { a: f64, j: usize },

    #[error("cell {cell} does not cover [-1,1] within {n_max} tilde-iterations (residual length {residual})")]
    NotCoveringWithin {
        cell: usize,
        n_max: usize,
        residual: f64,
    },

    #[error("scale {s} pushes branch {} outside [-1,1] (max admissible {max_scale})", .branch + 1)]
    ScaleTooLarge {
        s: f64,
        branch: usize,
        max_scale: f64,
    },

    #[error("perturbation hypotheses infeasible: {0}")]
    Infeasible(String),

    #[error("expansion case of branch {} changes between a = {a0} and a = {a1}", .branch + 1)]
    CaseUnstable { branch: usize, a0: f64, a1: f64 },

    #[error("word {0} has no counterpart cylinder")]
    MissingCounterpart(String),

    #[error("power iteration did not converge after {iterations} iterations (last L1 step {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
