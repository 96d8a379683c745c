use thiserror::Error;

use crate::equilibrium::EquilibriumCertificate;

#[derive(Debug, Error)]
pub enum Error {
    #[error("buyer {buyer}: budget must be positive and finite, got {budget}")]
    NegativeBudget { buyer: usize, budget: f64 },
    #[error("buyer {buyer}: no strictly positive weight")]
    EmptySupport { buyer: usize },
    #[error("buyer {buyer}: weight on good {good} is negative or not finite ({value})")]
    InvalidWeight { buyer: usize, good: usize, value: f64 },
    #[error("buyer {buyer}: Cobb-Douglas weights sum to {sum}, expected 1")]
    CobbDouglasWeightsNotNormalized { buyer: usize, sum: f64 },
    #[error("good {good} is not desired by any buyer")]
    UndesiredGood { good: usize },
    #[error("buyer {buyer}: rho {rho} outside the range of its utility class")]
    RhoOutOfRange { buyer: usize, rho: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed market: {0}")]
    Schema(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid spending: {0}")]
    InvalidSpending(String),
    #[error("price of good {good} is zero")]
    ZeroPrice { good: usize },
    #[error("support mismatch at index {index}: x > 0 where y = 0")]
    SupportMismatch { index: usize },
    #[error("no convergence after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("degenerate pair: divergence {0:e} below threshold")]
    DegeneratePair(f64),
    #[error("market has Cobb-Douglas buyers; the extended potential is required")]
    CobbDouglasRequiresExtended,
    #[error("rule {rule} incompatible with market: {reason}")]
    IncompatibleRule { rule: String, reason: String },
    #[error("equilibrium solve hit the iteration cap with residuals above tolerance (clearing {:e}, best response {:e})", .0.clearing_residual, .0.br_residual)]
    NotConverged(Box<EquilibriumCertificate>),
    #[error("{theorem}: wrong domain: {reason}")]
    WrongDomain { theorem: String, reason: String },
    #[error("buyer {buyer} has zero utility")]
    ZeroUtility { buyer: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
