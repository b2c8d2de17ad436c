use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid Zadoff-Chu root: gcd({length}, {root}) = {gcd}")]
    InvalidRoot { length: usize, root: i64, gcd: u64 },
    #[error("singular least-squares problem (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("capacity exceeded: {requested} users requested, at most {capacity} supported")]
    Capacity { requested: usize, capacity: usize },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, SyncError>;

impl SyncError {
    /// True for errors that stem from user-supplied parameters rather than
    /// from the numerics.
    pub fn is_config(&self) -> bool {
        !matches!(self, SyncError::Singular { .. } | SyncError::Numerical(_))
    }
}
