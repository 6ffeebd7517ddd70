//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input values (non-finite, wrong length, bad normalization).
    #[error("validation error: {0}")]
    Validation(String),

    /// Requested divergence is at or above the hard upper bound log(m).
    #[error("infeasible divergence: xi = {xi} must lie in [0, log m) = [0, {log_m})")]
    InfeasibleDivergence { xi: f64, log_m: f64 },

    /// All sub-likelihood values are equal, so no tilt can reach xi > 0.
    #[error("degenerate tilt: all sub-likelihood values are equal, constraint xi = {xi} > 0 is unreachable")]
    DegenerateTilt { xi: f64 },

    /// The tilted family saturates below the requested divergence
    /// (happens when the maximal sub-likelihood value is tied).
    #[error("unreachable divergence: achievable KL saturates at {achievable:.6} below requested xi = {xi}")]
    UnreachableDivergence { xi: f64, achievable: f64 },

    /// Parameter outside the model support (e.g. |rho| >= 1).
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be inverted is (numerically) singular.
    #[error("rank-deficient matrix: smallest eigenvalue magnitude {min_eigenvalue:e}")]
    RankDeficient { min_eigenvalue: f64 },

    /// xi selection could not be performed.
    #[error("selection error: {0}")]
    Selection(String),

    /// A Frechet margin transform produced an unusable column.
    #[error("unusable margin: {0}")]
    UnusableMargin(String),

    /// Bad run/scenario configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Bad or unreadable input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
