use thiserror::Error;

/// Errors produced by the estimation lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("support sizes differ: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("cannot condition on event: {0}")]
    Conditioning(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no n <= {n_max} satisfies the width target {target:e}")]
    ScheduleExhausted { target: f64, n_max: u64 },

    #[error("matrix factorization failed: {0}")]
    Decomposition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
