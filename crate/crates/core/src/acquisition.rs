//! Expected improvement, its average over posterior hyperparameter draws, and
//! multistart maximisation over the unit cube.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Dataset, GpPosterior, Hyperparameters};
use crate::inference::qnewton::{bounded_quasi_newton, central_difference_gradient, QuasiNewtonOptions};
use crate::inference::PosteriorDraws;
use crate::rng::StreamRng;

/// Below this predictive standard deviation EI is the plain improvement.
pub const DEGENERATE_SIGMA: f64 = 1e-9;

/// Step for the central-difference acquisition gradient.
pub const FD_STEP: f64 = 1e-6;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn ei(mean: f64, variance: f64, best: f64) -> f64 {
    let sigma = variance.sqrt();
    let improvement = best - mean;
    if sigma < DEGENERATE_SIGMA {
        return improvement.max(0.0);
    }
    let z = improvement / sigma;
    (improvement * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Expected improvement below `best` for a Gaussian predictive
/// `N(mean, variance)` (minimisation convention).
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> Result<f64> {
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::domain(format!("predictive variance must be non-negative, got {variance}")));
    }
    Ok(ei(mean, variance, best))
}

/// Everything EI needs to be evaluated at a point: one conditioned GP per
/// hyperparameter setting and the incumbent on the standardised scale.
#[derive(Debug, Clone)]
pub struct AcquisitionContext {
    models: Vec<GpPosterior>,
    best_observed: f64,
    dim: usize,
}

impl AcquisitionContext {
    /// ML-II mode: a single point estimate.
    pub fn point(data: &Dataset, hp: &Hyperparameters) -> Result<Self> {
        Self::from_hyperparameters(data, std::slice::from_ref(hp))
    }

    /// Fully Bayesian mode: one GP per posterior draw.
    pub fn draws(data: &Dataset, draws: &PosteriorDraws) -> Result<Self> {
        Self::from_hyperparameters(data, &draws.samples)
    }

    pub fn from_hyperparameters(data: &Dataset, hps: &[Hyperparameters]) -> Result<Self> {
        if hps.is_empty() {
            return Err(Error::domain("acquisition needs at least one hyperparameter setting"));
        }
        let models = hps.iter().map(|hp| GpPosterior::new(data, hp)).collect::<Result<Vec<_>>>()?;
        Ok(Self { models, best_observed: data.best_std(), dim: data.dim() })
    }

    pub fn best_observed(&self) -> f64 {
        self.best_observed
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// EI under each hyperparameter setting, in draw order.
    pub fn per_model_ei(&self, x: &[f64]) -> Vec<f64> {
        self.models
            .iter()
            .map(|m| {
                let (mean, var) = m.predict(x);
                ei(mean, var, self.best_observed)
            })
            .collect()
    }

    /// Equal-weight average of EI over the hyperparameter settings.
    pub fn value(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.per_model_ei(x).iter().sum();
        sum / self.models.len() as f64
    }
}

/// Marginalised EI: `(1/M) sum_m EI(x | theta_m)`.
pub fn marginalized_ei(x: &[f64], ctx: &AcquisitionContext) -> Result<f64> {
    if x.len() != ctx.dim || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::domain(format!("query {x:?} is not a point of the unit cube [0,1]^{}", ctx.dim)));
    }
    Ok(ctx.value(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub restarts: usize,
    pub candidates_per_restart: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { restarts: 10, candidates_per_restart: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionOptimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best acquisition value among the raw candidates.
    pub best_candidate_value: f64,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `count` Halton points with a random Cranley-Patterson shift. Dimensions
/// beyond the prime table fall back to plain uniform draws.
pub fn shifted_halton<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|k| match PRIMES.get(k) {
                    Some(&p) => (radical_inverse(i, p) + shift[k]).fract(),
                    None => rng.random::<f64>(),
                })
                .collect()
        })
        .collect()
}

/// Maximise the context's acquisition over `[0,1]^d`.
///
/// `restarts * candidates_per_restart` quasi-uniform candidates are scored,
/// the best `restarts` of them seed bounded quasi-Newton runs (central
/// difference gradients), and the best refined point wins; ties keep the
/// lowest restart index.
pub fn optimize_acquisition(
    ctx: &AcquisitionContext,
    cfg: &AcquisitionConfig,
    seed: u64,
) -> Result<AcquisitionOptimum> {
    if cfg.restarts == 0 || cfg.candidates_per_restart == 0 {
        return Err(Error::domain("acquisition optimisation needs restarts >= 1 and candidates >= 1"));
    }
    let d = ctx.dim;
    let mut rng = StreamRng::seed_from_u64(seed);
    let candidates = shifted_halton(cfg.restarts * cfg.candidates_per_restart, d, &mut rng);
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, x)| (ctx.value(x), i))
        .filter(|(v, _)| v.is_finite())
        .collect();
    if scored.is_empty() {
        return Err(Error::Acquisition("acquisition is non-finite at every candidate".into()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let best_candidate_value = scored[0].0;

    let bounds = vec![(0.0, 1.0); d];
    let opts = QuasiNewtonOptions { max_iters: 100, grad_tol: 1e-8, rel_ftol: 1e-12, memory: 10 };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(start_value, idx) in scored.iter().take(cfg.restarts) {
        let start = &candidates[idx];
        // Scale so the start has objective -1; EI can be tiny in absolute terms.
        let scale = if start_value > 0.0 { 1.0 / start_value } else { 1.0 };
        let mut f = |x: &[f64]| -scale * ctx.value(x);
        let refined = bounded_quasi_newton(
            |x, g| {
                central_difference_gradient(&mut f, x, &bounds, FD_STEP, g);
                f(x)
            },
            &bounds,
            start,
            &opts,
        );
        let (x, value) = match refined {
            Ok(m) => {
                let x: Vec<f64> = m.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                let v = ctx.value(&x);
                if v.is_finite() && v >= start_value { (x, v) } else { (start.clone(), start_value) }
            }
            Err(_) => (start.clone(), start_value),
        };
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((x, value));
        }
    }
    let (x, value) = best.expect("at least one restart ran");
    Ok(AcquisitionOptimum { x, value, best_candidate_value })
}
