//! Numerical laboratory for stochastic derivatives of Gaussian processes.
//!
//! The crate is organised bottom-up:
//!
//! * [`gaussian`]: finite first-chaos variables, Gram systems, regression
//!   (conditional expectation for jointly Gaussian families) and projection.
//! * [`models`]: closed-form covariance models (fractional Brownian motion,
//!   finite basis expansions, two-atom processes), the Volterra kernel
//!   `K_H`, Riemann–Liouville integrals and the operator `𝒦_H`.
//! * [`derivative`]: exact conditional difference quotients, verdicts
//!   (differentiates / degenerates / diverges), renormalized limits and
//!   rate estimation.
//! * [`simulation`]: fBm samplers (Cholesky, circulant embedding, Volterra),
//!   shifted processes, Girsanov weights and Monte Carlo estimators.
//! * [`chaos`]: iterated Wiener integrals and the linear equation embedded
//!   in Wiener chaos.
//!
//! Path generation runs on rayon when the `parallel` feature is enabled
//! (the default). Every path draws from its own substream keyed by
//! `(seed, stream, path)`, so parallel and sequential batches are bitwise
//! identical.

pub mod chaos;
pub mod derivative;
mod error;
pub mod gaussian;
pub mod models;
pub mod par;
pub mod quadrature;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
