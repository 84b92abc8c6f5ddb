use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "input queue overflowed its hard cap of {capacity} at t={t_ns}ns \
         (rate {rate:.1} ev/s vs throughput {mu:.1} ev/s); raise queue_capacity \
         or re-check calibration"
    )]
    QueueOverflow {
        capacity: usize,
        t_ns: u64,
        rate: f64,
        mu: f64,
    },

    #[error(transparent)]
    Core(#[from] hspice_core::CoreError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Exit code for the CLI: configuration problems are usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(hspice_core::CoreError::ConfigMismatch(_)) => 2,
            HarnessError::Core(hspice_core::CoreError::InvalidWindowSpec(_)) => 2,
            HarnessError::Core(hspice_core::CoreError::InvalidPattern { .. }) => 2,
            HarnessError::Core(hspice_core::CoreError::GuardParse { .. }) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::QueueOverflow { .. } => "queue_overflow",
            HarnessError::Core(_) => "engine",
            HarnessError::Io(_) => "io",
            HarnessError::Json(_) => "json",
            HarnessError::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
