//! The sequential query loop: observe, re-fit the surrogate, maximise the
//! acquisition, query, repeat until the evaluation budget is spent.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{optimize_acquisition, AcquisitionConfig, AcquisitionContext};
use crate::error::{Error, Result};
use crate::gp::{Bounds, Dataset, BENCHMARK_NOISE_VARIANCE};
use crate::inference::{fit_mlii, sample_posterior, MlIIConfig, SamplerConfig};
use crate::priors::PriorSet;
use crate::rng::{derive_seed, Role};

/// Hyperparameter treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Type-II maximum likelihood point estimate.
    Mlii,
    /// Fully Bayesian: EI averaged over posterior draws.
    Fbo,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Mlii, Method::Fbo];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mlii => "mlii",
            Method::Fbo => "fbo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlii" | "ml-ii" => Ok(Method::Mlii),
            "fbo" => Ok(Method::Fbo),
            other => Err(Error::domain(format!("unknown method `{other}` (expected mlii or fbo)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    /// Number of queries after the initial point.
    pub budget: usize,
    pub seed: u64,
    pub initial_point: Vec<f64>,
    pub bounds: Bounds,
    pub sampler: SamplerConfig,
    pub mlii: MlIIConfig,
    pub acquisition: AcquisitionConfig,
    pub priors: PriorSet,
    pub noise_variance: f64,
}

impl RunConfig {
    /// Benchmark defaults for everything except the method, budget, seed,
    /// starting point and domain.
    pub fn new(method: Method, budget: usize, seed: u64, initial_point: Vec<f64>, bounds: Bounds) -> Self {
        Self {
            method,
            budget,
            seed,
            initial_point,
            bounds,
            sampler: SamplerConfig::default(),
            mlii: MlIIConfig::default(),
            acquisition: AcquisitionConfig::default(),
            priors: PriorSet::benchmark(),
            noise_variance: BENCHMARK_NOISE_VARIANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::domain("budget must be at least 1"));
        }
        if !self.bounds.contains(&self.initial_point) {
            return Err(Error::domain(format!("initial point {:?} lies outside the bounds", self.initial_point)));
        }
        match self.method {
            Method::Mlii => self.mlii.validate(),
            Method::Fbo => self.sampler.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    /// Query in raw domain units.
    pub x: Vec<f64>,
    pub y: f64,
    pub best_so_far: f64,
    /// Wall-clock time for inference, acquisition and evaluation of this step.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub entries: Vec<HistoryEntry>,
}

impl History {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(&mut self, x: Vec<f64>, y: f64, seconds: f64) {
        let best_so_far = self.entries.last().map_or(y, |e| e.best_so_far.min(y));
        self.entries.push(HistoryEntry { step: self.entries.len(), x, y, best_so_far, seconds });
    }
}

/// A run aborted part-way; `history` holds every completed step.
#[derive(Debug, Clone, Error)]
#[error("{method} run failed at step {step}: {source}")]
pub struct RunFailure {
    pub step: usize,
    pub method: Method,
    pub history: History,
    pub source: Error,
}

/// Run the loop for `cfg.budget` queries after `cfg.initial_point`.
///
/// The objective is called exactly `budget + 1` times on success. Every step
/// re-standardises the outputs and re-infers hyperparameters from scratch;
/// step `n` draws its randomness from the `(seed, n, role)` substreams.
pub fn run_bo<F>(mut objective: F, cfg: &RunConfig) -> std::result::Result<History, RunFailure>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut history = History::default();
    let fail = |step: usize, history: &History, source: Error| RunFailure {
        step,
        method: cfg.method,
        history: history.clone(),
        source,
    };
    cfg.validate().map_err(|e| fail(0, &history, e))?;

    let t0 = Instant::now();
    let y0 = objective(&cfg.initial_point);
    if !y0.is_finite() {
        return Err(fail(0, &history, Error::domain(format!("objective returned {y0} at the initial point"))));
    }
    history.push(cfg.initial_point.clone(), y0, t0.elapsed().as_secs_f64());

    for step in 1..=cfg.budget {
        let started = Instant::now();
        let (xs, ys): (Vec<_>, Vec<_>) = history.entries.iter().map(|e| (e.x.clone(), e.y)).unzip();
        let next = Dataset::new(cfg.bounds.clone(), xs, ys)
            .and_then(|data| propose(&data, cfg, step as u64))
            .map_err(|e| fail(step, &history, e))?;

        let x = cfg.bounds.from_unit(&next);
        let y = objective(&x);
        if !y.is_finite() {
            return Err(fail(step, &history, Error::domain(format!("objective returned {y} at {x:?}"))));
        }
        history.push(x, y, started.elapsed().as_secs_f64());
    }
    Ok(history)
}

/// Next unit-cube query for the current data under the configured method.
fn propose(data: &Dataset, cfg: &RunConfig, step: u64) -> Result<Vec<f64>> {
    let ctx = match cfg.method {
        Method::Mlii => {
            let mlii = MlIIConfig { seed: derive_seed(cfg.seed, step, Role::MlII), ..cfg.mlii.clone() };
            let hp = fit_mlii(data, cfg.noise_variance, &mlii)?;
            AcquisitionContext::point(data, &hp)?
        }
        Method::Fbo => {
            let sampler = SamplerConfig { seed: derive_seed(cfg.seed, step, Role::Sampler), ..cfg.sampler.clone() };
            let draws = sample_posterior(data, &cfg.priors, cfg.noise_variance, &sampler)?;
            AcquisitionContext::draws(data, &draws)?
        }
    };
    let seed = derive_seed(cfg.seed, step, Role::Acquisition);
    Ok(optimize_acquisition(&ctx, &cfg.acquisition, seed)?.x)
}

/// Slack allowed below `true_min` before an observation is declared
/// inconsistent with it.
pub const REGRET_SLACK: f64 = 1e-12;

/// `best_so_far[n] - true_min` for `n = 0..=N` (entry 0 is the initial point).
pub fn regret(history: &History, true_min: f64) -> Result<Vec<f64>> {
    history
        .entries
        .iter()
        .map(|e| {
            if e.y < true_min - REGRET_SLACK {
                return Err(Error::domain(format!(
                    "observation {} at step {} is below the stated minimum {true_min}",
                    e.y, e.step
                )));
            }
            Ok((e.best_so_far - true_min).max(0.0))
        })
        .collect()
}
