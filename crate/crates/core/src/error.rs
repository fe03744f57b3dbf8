use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or non-finite input data.
    #[error("input error: {0}")]
    Input(String),

    /// A correlation model whose parameters violate the model family's constraints.
    #[error("model error: {0}")]
    Model(String),

    /// Numerical evaluation of a user functional failed.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// The Hermite rank cannot be determined up to the truncation order.
    #[error("rank undetermined at truncation order {max_order}")]
    RankUndetermined { max_order: usize },

    /// A functional violates the mean-zero contract required by partial sums.
    #[error("contract error: {0}")]
    Contract(String),

    /// Gaussian sequence synthesis failed.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// A quadrature did not reach the requested accuracy.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
