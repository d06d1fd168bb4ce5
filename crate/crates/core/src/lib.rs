//! Bayesian optimisation with Gaussian-process surrogates under two
//! hyperparameter regimes: type-II maximum likelihood point estimates and
//! fully Bayesian marginalisation over posterior draws.
//!
//! The pieces compose bottom-up:
//!
//! - [`gp`] holds the Matérn 5/2 ARD surrogate, the input/output transforms
//!   and the log marginal likelihood with its gradient.
//! - [`priors`] builds log-normal priors from target moments.
//! - [`inference`] fits hyperparameters, either by multistart bounded
//!   quasi-Newton or by NUTS sampling of the hyperparameter posterior.
//! - [`acquisition`] evaluates (marginalised) expected improvement and
//!   maximises it over the unit cube.
//! - [`bo_loop`] runs the sequential query loop against a black-box objective.

pub mod acquisition;
pub mod bo_loop;
pub mod error;
pub mod gp;
pub mod inference;
pub mod priors;
pub mod rng;

pub use error::{Error, Result};
