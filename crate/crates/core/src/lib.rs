//! Regression on locally differentially-private tabular data, trained as
//! Wasserstein distributionally-robust optimization.
//!
//! The crate is organised around the training pipeline:
//!
//! - [`privacy`]: additive Laplace/Gaussian mechanisms and their calibration.
//! - [`ambiguity`]: Wasserstein radii for the ambiguity set around the
//!   privatized empirical distribution, plus exact W1/W2 distances.
//! - [`erm`]: Lipschitz-regularized empirical risk minimization.
//! - [`gauss_dro`]: exact DRO linear regression under a Gaussian summary of the
//!   data, solved through a nested one-dimensional dual, with an LMI certificate
//!   checker.
//! - [`experiment`]: CSV ingestion, epsilon sweeps and reporting.

pub mod ambiguity;
pub mod erm;
pub mod error;
pub mod experiment;
pub mod gauss_dro;
pub mod linalg;
pub mod privacy;

pub use error::{Error, Result};
