use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty sample")]
    EmptySample,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("design matrix is rank deficient (numerical rank {rank} < {cols}); offending columns: {}", .columns.join(", "))]
    RankDeficient {
        rank: usize,
        cols: usize,
        columns: Vec<String>,
    },

    #[error("too few regression points: {rows} rows for {cols} basis functions")]
    Underdetermined { rows: usize, cols: usize },

    #[error("non-finite value at t = {t}, outer index {index}: {what}")]
    NonFinite {
        t: usize,
        index: usize,
        what: &'static str,
    },

    #[error("division guard: {0}")]
    DivisionGuard(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
