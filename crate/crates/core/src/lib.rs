//! Kernel-adaptive physics-informed extreme learning machine.
//!
//! A shallow Gaussian-RBF network whose output weights are solved in closed
//! form by least squares against PDE residual and boundary equations, and
//! whose kernel centers and widths are drawn from a low-dimensional mixture
//! distribution tuned by Bayesian optimization.
//!
//! Module map:
//!
//! - [`problems`]: benchmark PDEs, exact solutions, finite-difference oracle.
//! - [`rbf`]: Gaussian kernels and their analytic derivatives.
//! - [`assembly`]: design-matrix construction, pseudoinverse solve, loss.
//! - [`sampling`]: mixture model for centers, stiffness-adaptive widths.
//! - [`clustering`]: high-gradient detection with DBSCAN.
//! - [`bayesopt`]: GP surrogate, expected improvement, outer loop.
//! - [`drivers`]: forward, time-block, inverse and curriculum workflows.
//! - [`cli_io`]: configuration files, result bundles, CSV output.

pub mod assembly;
pub mod bayesopt;
pub mod cli_io;
pub mod clustering;
pub mod drivers;
pub mod error;
pub mod problems;
pub mod rbf;
pub mod sampling;

pub use error::{KapiError, Result};
