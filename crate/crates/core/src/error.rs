use thiserror::Error;

/// Errors raised by the simulation and pricing routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} must be {constraint} (got {value})")]
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{rule} needs a substep count divisible by {divisor}, got {substeps}")]
    RuleMismatch {
        rule: &'static str,
        divisor: usize,
        substeps: usize,
    },

    #[error("reciprocal quadrature needs positive values, found {0}")]
    NonPositive(f64),

    #[error("expected a {expected}-dimensional state, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("regression matrix at t={time} is singular (condition estimate {condition:e})")]
    SingularMatrix { time: usize, condition: f64 },

    #[error("all particle weights are zero at their stopping times")]
    ZeroWeight,

    #[error("fine grid of {required} bytes exceeds the {budget}-byte budget")]
    MemoryBudget { required: usize, budget: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
