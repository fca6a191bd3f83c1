//! Periodic homogenization of diffusions with small jumps.
//!
//! The crate computes the effective Brownian covariance of a periodic jump-diffusion,
//! simulates the process under diffusive scaling, and provides the statistical checks
//! that tie the two together: invariant measures on the torus, semimartingale
//! characteristics, Gaussian limit tests and first-exit problems, plus the long-time
//! classification of the homogenized limit.

pub mod characteristics;
pub mod cli;
pub mod convergence;
pub mod effective;
pub mod error;
pub mod exit;
pub mod field;
pub mod linalg;
pub mod model;
pub mod report;
pub mod rng;
pub mod schema;
pub mod shipped;
pub mod sim;
pub mod stats;
pub mod torus;

pub use error::{Condition, Error, Result};
pub use field::{Period, PeriodicField, Shape, Term};
pub use model::{JumpFamily, Model, SizeDistribution, ValidatedModel};
