use thiserror::Error;

/// Failures of the experiment runner, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] heston_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("report error: {0}")]
    Report(String),
}

impl BenchError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use heston_core::Error as E;
        match self {
            BenchError::Config(_) => 2,
            BenchError::Core(e) => match e {
                E::SingularMatrix { .. } | E::ZeroWeight | E::NonPositive(_) => 3,
                E::InvalidParameter { .. }
                | E::Config(_)
                | E::RuleMismatch { .. }
                | E::DimensionMismatch { .. }
                | E::MemoryBudget { .. } => 2,
            },
            BenchError::Io(_) | BenchError::Report(_) => 1,
        }
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Report(e.to_string())
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Report(e.to_string())
    }
}
