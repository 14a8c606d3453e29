//! Regularized exponential mechanism for differentially private empirical risk
//! minimization and stochastic convex optimization over `ℓp` and Schatten-`p`
//! geometries.
//!
//! The mechanism releases a single draw from `ν ∝ exp(−k(F_D + μ r))`, where
//! `F_D` is the empirical risk of a convex Lipschitz loss and `r` is a
//! regularizer that is 1-strongly convex in the target norm. The crate is split
//! into:
//!
//! - [`geometry`]: norms, dual norms, and compact convex domains.
//! - [`regularizers`]: strongly convex regularizers with range bounds `Θ`.
//! - [`losses`]: datasets, loss families, empirical and population risk.
//! - [`mechanism`]: parameter selection, utility bounds, and the private solver.
//! - [`samplers`]: exact 1D, hit-and-run, and MALA samplers for logconcave targets.
//! - [`audit`]: numerical checks of privacy curves, Gibbs risk, and concentration.

pub mod audit;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod mechanism;
pub mod minimize;
pub mod quadrature;
pub mod regularizers;
pub mod rng;
pub mod samplers;
pub mod special;

pub use error::{Error, Result};
pub use geometry::{Domain, NormSpec};
pub use losses::{LossFamily, LossModel, PopulationSpec, Sample};
pub use mechanism::{GibbsTarget, MechanismParams, SensitivityFactor, Variant};
pub use regularizers::Regularizer;
pub use samplers::{SamplerConfig, SamplerMethod, SamplerReport};
