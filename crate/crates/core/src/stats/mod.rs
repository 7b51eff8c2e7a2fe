//! Self-contained numerical statistics: descriptive summaries, Cronbach's
//! alpha, ordinary least squares with t/F inference, and the special
//! functions behind the p-values.

mod cronbach;
mod descriptive;
mod matrix;
mod ols;
pub mod special;

pub use cronbach::{cronbach_alpha, ReliabilityResult};
pub use descriptive::{describe, Description};
pub use matrix::Matrix;
pub use ols::{ols, ols_labeled, Coefficient, RegressionResult};
pub use special::{f_cdf, f_sf, t_cdf, t_two_sided_p};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("insufficient observations: have {have}, need more than {need}")]
    InsufficientObservations { have: usize, need: usize },
    #[error("design matrix is rank deficient (column {column} is linearly dependent)")]
    RankDeficient { column: usize },
    #[error("total variance is zero")]
    DegenerateVariance,
    #[error("continued fraction did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
