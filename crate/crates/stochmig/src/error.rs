use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("chain has no unique stationary distribution")]
    NotIrreducible,
    #[error("rating {rating} outside 1..={k}")]
    RatingOutOfRange { rating: i64, k: usize },
    #[error("panel too short: need T >= {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("firm index {0} out of range")]
    FirmOutOfRange(usize),
    #[error("unknown design {0} (expected 1, 2 or 3)")]
    UnknownDesign(u8),
    #[error("invalid method: {0}")]
    InvalidMethod(String),
    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
