use thiserror::Error;

use crate::engine::Trajectory;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("site {site} out of range 1..={len}")]
    Range { site: i64, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("support of test function [{lo}, {hi}] escapes the window [0, {window}]")]
    Support { lo: f64, hi: f64, window: f64 },

    #[error("event budget of {budget} events exceeded at macro time {t}")]
    BudgetExceeded {
        budget: u64,
        t: f64,
        partial: Box<Trajectory>,
    },

    #[error("observable `{0}` was not registered before the run")]
    MissingAccumulator(String),

    #[error("state space of {states} states exceeds the cap of {cap}")]
    Size { states: u128, cap: usize },

    #[error("function is not mean-zero (mean = {0:e})")]
    Projection(f64),

    #[error("generator is singular on the mean-zero subspace")]
    Singular,

    #[error("numerical precision: {0}")]
    Precision(String),

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("specification mismatch: {0}")]
    Spec(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
