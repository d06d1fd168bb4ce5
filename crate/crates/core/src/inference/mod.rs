//! Hyperparameter inference: ML-II point estimates and NUTS posterior draws.

pub mod mlii;
pub mod nuts;
pub mod posterior;
pub mod qnewton;

pub use mlii::{fit_mlii, fit_mlii_detailed, MlIIConfig, MlIIFit};
pub use nuts::{
    leapfrog, leapfrog_step, nuts_transition, sample_target, Chain, LogDensity, PhasePoint,
    SamplerConfig, SamplerDiagnostics,
};
pub use posterior::{sample_posterior, HyperPosterior, PosteriorDraws};
pub use qnewton::{bounded_quasi_newton, Minimum, QuasiNewtonOptions, Termination};
