//! Fully Bayesian treatment: NUTS on the hyperparameter posterior in log space.

use super::nuts::{sample_target, LogDensity, SamplerConfig, SamplerDiagnostics};
use crate::error::{Error, Result};
use crate::gp::{log_marginal_likelihood, Dataset, Hyperparameters};
use crate::priors::PriorSet;

/// Unnormalised log posterior over `[log output_scale, log l_1, ...]`:
/// log-space prior density plus log marginal likelihood.
#[derive(Debug, Clone, Copy)]
pub struct HyperPosterior<'a> {
    pub data: &'a Dataset,
    pub priors: &'a PriorSet,
    pub noise_variance: f64,
}

impl LogDensity for HyperPosterior<'_> {
    fn dim(&self) -> usize {
        1 + self.data.dim()
    }

    fn log_density_and_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let Ok((lp, gp)) = self.priors.log_density_with_grad(u, self.data.dim()) else {
            return f64::NAN;
        };
        let Ok(hp) = Hyperparameters::from_log(u, self.noise_variance) else {
            return f64::NEG_INFINITY;
        };
        match log_marginal_likelihood(self.data, &hp) {
            Ok((ll, gl)) => {
                for ((o, a), b) in grad.iter_mut().zip(gp).zip(gl) {
                    *o = a + b;
                }
                lp + ll
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// `M` thinned posterior draws on the natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub samples: Vec<Hyperparameters>,
    pub diagnostics: SamplerDiagnostics,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One row per draw: `[output_scale, l_1, ..., l_d]`.
    pub fn as_matrix(&self) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|h| std::iter::once(h.output_scale()).chain(h.length_scales().iter().copied()).collect())
            .collect()
    }
}

/// Sample the hyperparameter posterior with a chain started at the prior
/// centre `mu_N`.
pub fn sample_posterior(
    data: &Dataset,
    priors: &PriorSet,
    noise_variance: f64,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    if data.is_empty() {
        return Err(Error::domain("posterior sampling needs at least one observation"));
    }
    let target = HyperPosterior { data, priors, noise_variance };
    let init = priors.log_space_centre(data.dim());
    let chain = sample_target(&target, &init, cfg)?;
    let samples = chain
        .draws
        .iter()
        .map(|u| Hyperparameters::from_log(u, noise_variance))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Inference(format!("posterior draw left the positive orthant: {e}")))?;
    Ok(PosteriorDraws { samples, diagnostics: chain.diagnostics })
}
