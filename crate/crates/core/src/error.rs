//! Library error type.

use crate::simulate::PathSample;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The triplet violates a structural invariant (negative mass, `φ(k) ≤ 0`, ...).
    #[error("invalid triplet: {0}")]
    InvalidTriplet(String),

    /// The requested operation is not defined for the given inputs
    /// (analytic continuation of a tabulated measure, spectral expansion
    /// with `σ² = 0`, below-threshold times, ...).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("integration failure: {0}")]
    Integration(String),

    /// An iterative scheme (series, solve, bisection) did not converge.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// A table or law does not resolve the requested index.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// Exact integer basis conversion refused beyond the configured degree.
    #[error("unsupported degree {degree}, cap is {cap}")]
    DegreeCap { degree: usize, cap: usize },

    /// A simulated path exceeded the state cap; the partial path is returned.
    #[error("state cap {cap} exceeded at t = {time}")]
    StateCap {
        cap: u64,
        time: f64,
        partial: Box<PathSample>,
    },
}
