use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate marginal: p_Y[{index}] = {mass:e} (must be strictly positive)")]
    DegenerateMarginal { index: usize, mass: f64 },

    #[error("operator block has numerical rank {rank}, below the required minimum {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("|X| = {0} exceeds the exhaustive enumeration limit of {max}", max = crate::baseline::MAX_EXHAUSTIVE_X)]
    AlphabetTooLarge(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
