use std::fmt;

use thiserror::Error;

/// Standing assumptions on the model that a configuration must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// The influence kernel is Lipschitz continuous.
    H1,
    /// The kernel is bounded away from zero on `[0, initial diameter]`.
    H2,
    /// Weights are measurable with values in `[0, 1]`.
    H3,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::H1 => "H1 (Lipschitz kernel)",
            Hypothesis::H2 => "H2 (positive kernel minimum)",
            Hypothesis::H3 => "H3 (weights in [0,1])",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum Error {
    #[error("hypothesis {hypothesis} violated: {detail}")]
    HypothesisViolation {
        hypothesis: Hypothesis,
        detail: String,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("invariant `{check}` breached at agent {agent:?}, t = {time:?}: {detail}")]
    InvariantBreach {
        check: String,
        agent: Option<usize>,
        time: Option<f64>,
        detail: String,
    },

    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    #[error("persistent excitation violated: window starting at t = {witness} integrates to {integral} < mu = {mu}")]
    PeViolated { witness: f64, integral: f64, mu: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("generated schedule failed post-verification: {0}")]
    InternalVerificationFailure(String),

    #[error("schedule generation failed: {0}")]
    GenerationFailed(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("projection direction is the zero vector")]
    ZeroDirection,

    #[error("no trial converged for mu = {mu}")]
    EmptyAggregate { mu: f64 },

    #[error("degenerate log-log fit: {0}")]
    DegenerateFit(String),

    #[error("trial {trial} at mu = {mu}: {source}")]
    Trial {
        mu: f64,
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed trajectory data: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
