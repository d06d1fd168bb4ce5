//! Suite configuration and its flat key-value file form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fbo_core::acquisition::AcquisitionConfig;
use fbo_core::bo_loop::{Method, RunConfig};
use fbo_core::gp::{Bounds, BENCHMARK_NOISE_VARIANCE};
use fbo_core::inference::{MlIIConfig, SamplerConfig};
use fbo_core::priors::PriorSet;
use serde::{Deserialize, Serialize};

use crate::objective::ackley_bounds;
use crate::{BenchError, Result};

/// Inclusive seed range `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start > end {
            return Err(BenchError::Config(format!("empty seed range {start}..{end}")));
        }
        Ok(Self { start, end })
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Accepts `A..B`, `A-B` (both inclusive) or a single seed `A`.
impl FromStr for SeedRange {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || BenchError::Config(format!("cannot parse seed range `{s}` (expected A..B)"));
        let s = s.trim();
        let (a, b) = s
            .split_once("..=")
            .or_else(|| s.split_once(".."))
            .or_else(|| s.split_once('-'))
            .unwrap_or((s, s));
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        SeedRange::new(a, b)
    }
}

/// `--method` values.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "both" | "all" => Ok(Method::ALL.to_vec()),
        other => other
            .parse::<Method>()
            .map(|m| vec![m])
            .map_err(|e| BenchError::Config(e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seeds: SeedRange,
    pub budget: usize,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    /// Parallel runs; 0 means one per available core.
    pub workers: usize,
    pub dim: usize,
    pub sampler: SamplerConfig,
    pub mlii: MlIIConfig,
    pub acquisition: AcquisitionConfig,
    pub output_scale_mean: f64,
    pub output_scale_std: f64,
    pub length_scale_mean: f64,
    pub length_scale_std: f64,
    pub hist_bins: usize,
    /// Steps at which regret histograms are written (those beyond the
    /// budget are skipped).
    pub hist_steps: Vec<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds: SeedRange { start: 0, end: 100 },
            budget: 30,
            methods: Method::ALL.to_vec(),
            out_dir: PathBuf::from("results"),
            workers: 0,
            dim: 2,
            sampler: SamplerConfig::default(),
            mlii: MlIIConfig::default(),
            acquisition: AcquisitionConfig::default(),
            output_scale_mean: 10.0,
            output_scale_std: 10.0,
            length_scale_mean: 0.5,
            length_scale_std: 0.5,
            hist_bins: 20,
            hist_steps: vec![20, 30],
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(BenchError::Config("budget must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Config("no methods selected".into()));
        }
        if self.dim == 0 {
            return Err(BenchError::Config("dimension must be at least 1".into()));
        }
        self.priors()?;
        self.sampler.validate()?;
        self.mlii.validate()?;
        if self.acquisition.restarts == 0 || self.acquisition.candidates_per_restart == 0 {
            return Err(BenchError::Config("acquisition restarts and candidates must be positive".into()));
        }
        Ok(())
    }

    pub fn priors(&self) -> Result<PriorSet> {
        Ok(PriorSet::from_moments(
            self.output_scale_mean,
            self.output_scale_std,
            self.length_scale_mean,
            self.length_scale_std,
        )?)
    }

    pub fn bounds(&self) -> Bounds {
        ackley_bounds(self.dim)
    }

    /// Loop configuration for one `(seed, method)` run.
    pub fn run_config(&self, method: Method, seed: u64, initial_point: Vec<f64>) -> Result<RunConfig> {
        Ok(RunConfig {
            method,
            budget: self.budget,
            seed,
            initial_point,
            bounds: self.bounds(),
            sampler: self.sampler.clone(),
            mlii: self.mlii.clone(),
            acquisition: self.acquisition,
            priors: self.priors()?,
            noise_variance: BENCHMARK_NOISE_VARIANCE,
        })
    }

    /// Histogram steps that fall within the budget, plus the budget itself.
    pub fn histogram_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = self.hist_steps.iter().copied().filter(|&s| s <= self.budget).collect();
        steps.push(self.budget);
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    /// Overlay every key present in `file`.
    pub fn apply_file(&mut self, file: &FileConfig) -> Result<()> {
        macro_rules! set {
            ($($key:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = file.$key.clone() { $target = v; })*
            };
        }
        if let Some(s) = &file.seeds {
            self.seeds = s.parse()?;
        }
        if let Some(m) = &file.method {
            self.methods = parse_methods(m)?;
        }
        set! {
            budget => self.budget,
            out => self.out_dir,
            workers => self.workers,
            dim => self.dim,
            warmup => self.sampler.warmup,
            draws => self.sampler.draws,
            thin => self.sampler.thin,
            target_accept => self.sampler.target_accept,
            max_tree_depth => self.sampler.max_tree_depth,
            mlii_restarts => self.mlii.restarts,
            mlii_output_scale_lower => self.mlii.output_scale_range.0,
            mlii_output_scale_upper => self.mlii.output_scale_range.1,
            mlii_length_scale_lower => self.mlii.length_scale_range.0,
            mlii_length_scale_upper => self.mlii.length_scale_range.1,
            mlii_max_iters => self.mlii.max_iters,
            mlii_grad_tol => self.mlii.grad_tol,
            acq_restarts => self.acquisition.restarts,
            acq_candidates => self.acquisition.candidates_per_restart,
            output_scale_mean => self.output_scale_mean,
            output_scale_std => self.output_scale_std,
            length_scale_mean => self.length_scale_mean,
            length_scale_std => self.length_scale_std,
            hist_bins => self.hist_bins,
            hist_steps => self.hist_steps,
        }
        Ok(())
    }
}

/// Flat TOML document; every key is optional and overrides the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<String>,
    pub seeds: Option<String>,
    pub budget: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub dim: Option<usize>,
    pub warmup: Option<usize>,
    pub draws: Option<usize>,
    pub thin: Option<usize>,
    pub target_accept: Option<f64>,
    pub max_tree_depth: Option<usize>,
    pub mlii_restarts: Option<usize>,
    pub mlii_output_scale_lower: Option<f64>,
    pub mlii_output_scale_upper: Option<f64>,
    pub mlii_length_scale_lower: Option<f64>,
    pub mlii_length_scale_upper: Option<f64>,
    pub mlii_max_iters: Option<usize>,
    pub mlii_grad_tol: Option<f64>,
    pub acq_restarts: Option<usize>,
    pub acq_candidates: Option<usize>,
    pub output_scale_mean: Option<f64>,
    pub output_scale_std: Option<f64>,
    pub length_scale_mean: Option<f64>,
    pub length_scale_std: Option<f64>,
    pub hist_bins: Option<usize>,
    pub hist_steps: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
