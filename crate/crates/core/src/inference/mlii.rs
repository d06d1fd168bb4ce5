//! Type-II maximum likelihood: multistart maximisation of the log marginal
//! likelihood in log-hyperparameter space.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::qnewton::{bounded_quasi_newton, QuasiNewtonOptions};
use crate::error::{Error, Result};
use crate::gp::{log_marginal_likelihood, Dataset, Hyperparameters};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlIIConfig {
    pub restarts: usize,
    /// Natural-scale search range for the output scale.
    pub output_scale_range: (f64, f64),
    /// Natural-scale search range shared by every length scale.
    pub length_scale_range: (f64, f64),
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for MlIIConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            output_scale_range: (1e-3, 1e3),
            length_scale_range: (1e-3, 1e3),
            max_iters: 200,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

impl MlIIConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::domain("ML-II needs at least one restart"));
        }
        for (name, (lo, hi)) in [
            ("output scale", self.output_scale_range),
            ("length scale", self.length_scale_range),
        ] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::domain(format!("{name} range ({lo}, {hi}) must satisfy 0 < lower < upper")));
            }
        }
        Ok(())
    }

    /// Log-space box over `[log output_scale, log l_1, ..., log l_dim]`.
    pub fn log_box(&self, dim: usize) -> Vec<(f64, f64)> {
        let ln = |(lo, hi): (f64, f64)| (lo.ln(), hi.ln());
        std::iter::once(ln(self.output_scale_range))
            .chain(std::iter::repeat_n(ln(self.length_scale_range), dim))
            .collect()
    }
}

/// Outcome of one multistart run.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub start: Vec<f64>,
    pub start_lml: Option<f64>,
    pub result: std::result::Result<(Vec<f64>, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlIIFit {
    pub hyperparameters: Hyperparameters,
    pub log_marginal_likelihood: f64,
    pub restarts: Vec<RestartOutcome>,
}

/// Negative LML and its gradient in log space; failures map to `+inf`.
fn neg_lml(data: &Dataset, noise: f64, u: &[f64], grad: &mut [f64]) -> f64 {
    let Ok(hp) = Hyperparameters::from_log(u, noise) else {
        return f64::INFINITY;
    };
    match log_marginal_likelihood(data, &hp) {
        Ok((v, g)) => {
            for (o, gi) in grad.iter_mut().zip(g) {
                *o = -gi;
            }
            -v
        }
        Err(_) => f64::INFINITY,
    }
}

/// Full multistart fit, keeping every restart's outcome.
pub fn fit_mlii_detailed(data: &Dataset, noise_variance: f64, cfg: &MlIIConfig) -> Result<MlIIFit> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::domain("ML-II needs at least one observation"));
    }
    let bx = cfg.log_box(data.dim());
    let mut rng = StreamRng::seed_from_u64(cfg.seed);
    let opts = QuasiNewtonOptions { max_iters: cfg.max_iters, grad_tol: cfg.grad_tol, ..Default::default() };

    let mut outcomes = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..cfg.restarts {
        let start: Vec<f64> = bx.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
        let mut scratch = vec![0.0; start.len()];
        let f0 = neg_lml(data, noise_variance, &start, &mut scratch);
        let start_lml = f0.is_finite().then_some(-f0);
        let result = bounded_quasi_newton(|u, g| neg_lml(data, noise_variance, u, g), &bx, &start, &opts)
            .map(|m| (m.x, -m.value))
            .map_err(|e| e.to_string());
        if let Ok((u, lml)) = &result {
            if best.as_ref().is_none_or(|(_, b)| lml > b) {
                best = Some((u.clone(), *lml));
            }
        }
        outcomes.push(RestartOutcome { start, start_lml, result });
    }

    match best {
        Some((u, lml)) => Ok(MlIIFit {
            hyperparameters: Hyperparameters::from_log(&u, noise_variance)?,
            log_marginal_likelihood: lml,
            restarts: outcomes,
        }),
        None => {
            let reasons: Vec<String> = outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| format!("restart {i}: {}", o.result.as_ref().err().map_or("?", |s| s.as_str())))
                .collect();
            Err(Error::Inference(format!("every ML-II restart failed: {}", reasons.join("; "))))
        }
    }
}

/// Hyperparameters with the highest log marginal likelihood over all restarts.
pub fn fit_mlii(data: &Dataset, noise_variance: f64, cfg: &MlIIConfig) -> Result<Hyperparameters> {
    fit_mlii_detailed(data, noise_variance, cfg).map(|f| f.hyperparameters)
}
