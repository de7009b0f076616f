//! Discrete self-similar Markov chains and their skip-free Laguerre
//! perturbations, built from a Bernstein-function triplet `(m, σ², Π)`.
//!
//! The library constructs the upward skip-free generators associated with a
//! Bernstein function, computes invariant distributions and factorial
//! moments in closed form, builds the biorthogonal eigen/co-eigen system of
//! the (non-reversible) Laguerre chain together with its spectral heat
//! kernel and ergodicity constants, and simulates both chains exactly.
//! Every analytic fast path is paired with an independent brute-force
//! oracle (adaptive quadrature, uniformization, Monte Carlo) so results can
//! be certified numerically.
//!
//! # Layout
//!
//! - [`bernstein`] — triplets, the Bernstein function `φ` and its analytic
//!   continuation, Bernstein-gamma values `W_φ`, Lévy-measure integrals.
//! - [`kernels`] — discrete dilation (binomial thinning), Poissonization,
//!   the falling-factorial polynomial basis and Stirling conversions.
//! - [`generator`] — truncated rate matrices for the self-similar and
//!   Laguerre chains, with boundary policies and structural validation.
//! - [`invariant`] — the invariant law of the Laguerre chain by alternating
//!   series and by stationary solve, plus moment certificates.
//! - [`spectral`] — eigenfunctions, co-eigenfunctions, biorthogonality,
//!   the spectral heat kernel, Bochner subordination and the hypocoercive
//!   constant.
//! - [`moments`] — closed-form factorial moments of both semigroups and the
//!   exact moment-level identity checks.
//! - [`simulate`] — exact continuous-time simulation and Monte Carlo
//!   statistical tests.
//! - [`reference`] — uniformization matrix exponential and adaptive
//!   quadrature oracles.
//! - [`families`] — the three worked example families with closed-form
//!   golden values and a terminating hypergeometric evaluator.
//! - [`verify`] — end-to-end verification suites with JSON-able reports.

pub mod bernstein;
pub mod dd;
pub mod error;
pub mod families;
pub mod generator;
pub mod invariant;
pub mod kernels;
pub mod moments;
pub mod reference;
pub mod simulate;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use bernstein::{BernsteinTriplet, DerivedConstants, LevyMeasure};
pub use error::{Error, Result};
pub use generator::{BoundaryPolicy, ChainKind, SkipFreeGenerator};
pub use invariant::{InvariantLaw, LawMethod};
pub use simulate::PathSample;
pub use spectral::SpectralSystem;

/// Pin the global worker-pool size (rayon); call once, before any
/// parallel work. Fails if a pool was already initialized.
pub fn configure_threads(threads: usize) -> std::result::Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}
