use thiserror::Error;

/// Errors produced by the engine crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("sequence monotonicity violated at seq {seq} (previous {prev})")]
    Monotonicity { seq: u64, prev: u64 },

    #[error("timestamp order violated at seq {seq}: ts {ts} < previous {prev}")]
    TimestampOrder { seq: u64, ts: i64, prev: i64 },

    #[error("invalid pattern {pattern} step {step}: {msg}")]
    InvalidPattern {
        pattern: u32,
        step: usize,
        msg: String,
    },

    #[error("guard parse error at byte {pos}: {msg}")]
    GuardParse { pos: usize, msg: String },

    #[error("invalid window spec: {0}")]
    InvalidWindowSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough training data: {have} of {need} observations")]
    NotReady { have: usize, need: usize },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("logic error: {0}")]
    Logic(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
