//! Zero-mean Gaussian-process surrogate with a Matérn 5/2 ARD kernel.
//!
//! Inputs are mapped affinely into the unit cube and outputs are standardised
//! before any GP algebra; all predictive quantities live on the standardised
//! output scale.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise variance used for every benchmark run. Never fitted or sampled.
pub const BENCHMARK_NOISE_VARIANCE: f64 = 1e-6;

/// Diagonal jitter escalation applied when the noisy Gram matrix is not
/// numerically positive definite.
pub const JITTER_LEVELS: [f64; 3] = [1e-8, 1e-6, 1e-4];

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Axis-aligned box `[lower_i, upper_i]` describing the raw input domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds(Vec<(f64, f64)>);

impl Bounds {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::domain("bounds must have at least one dimension"));
        }
        for (i, &(lo, hi)) in pairs.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::domain(format!(
                    "bounds[{i}] = ({lo}, {hi}) must satisfy lower < upper"
                )));
            }
        }
        Ok(Bounds(pairs))
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Bounds(vec![(0.0, 1.0); dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.0).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    /// Inverse of [`normalize_inputs`]; exact at the bounds.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.0)
            .map(|(&u, &(lo, hi))| {
                if u <= 0.0 {
                    lo
                } else if u >= 1.0 {
                    hi
                } else {
                    lo + u * (hi - lo)
                }
            })
            .collect()
    }
}

/// Componentwise `(x - lower) / (upper - lower)`.
pub fn normalize_inputs(raw: &[f64], bounds: &Bounds) -> Result<Vec<f64>> {
    if raw.len() != bounds.dim() {
        return Err(Error::domain(format!(
            "input has {} coordinates, bounds have {}",
            raw.len(),
            bounds.dim()
        )));
    }
    raw.iter()
        .zip(bounds.pairs())
        .enumerate()
        .map(|(i, (&v, &(lo, hi)))| {
            if !(v >= lo && v <= hi) {
                return Err(Error::domain(format!(
                    "coordinate {i} = {v} lies outside [{lo}, {hi}]"
                )));
            }
            Ok(((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        })
        .collect()
}

/// Standardised outputs together with the transform that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Standardized {
    pub fn to_raw(&self, z: f64) -> f64 {
        self.mean + self.std * z
    }
}

/// Centre by the sample mean and scale by the sample standard deviation
/// (n - 1 divisor). A single observation or zero spread uses `std = 1`.
pub fn standardize_outputs(y: &[f64]) -> Result<Standardized> {
    if y.is_empty() {
        return Err(Error::domain("cannot standardise an empty output vector"));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite output value {bad}")));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let mut std = 1.0;
    if y.len() >= 2 {
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let s = (ss / (n - 1.0)).sqrt();
        if s > 0.0 && s.is_finite() {
            std = s;
        }
    }
    Ok(Standardized {
        values: y.iter().map(|v| (v - mean) / std).collect(),
        mean,
        std,
    })
}

/// Kernel hyperparameters: output scale (kernel variance), one length scale
/// per input dimension, and a fixed noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    output_scale: f64,
    length_scales: Vec<f64>,
    noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(output_scale: f64, length_scales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(output_scale) {
            return Err(Error::domain(format!("output scale must be positive, got {output_scale}")));
        }
        if length_scales.is_empty() {
            return Err(Error::domain("at least one length scale is required"));
        }
        if let Some((i, l)) = length_scales.iter().enumerate().find(|(_, &l)| !positive(l)) {
            return Err(Error::domain(format!("length scale {i} must be positive, got {l}")));
        }
        if !positive(noise_variance) {
            return Err(Error::domain(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self { output_scale, length_scales, noise_variance })
    }

    /// Build from `[log output_scale, log length_scale_1, ...]`.
    pub fn from_log(log_params: &[f64], noise_variance: f64) -> Result<Self> {
        match log_params.split_first() {
            Some((&s, ls)) => Self::new(s.exp(), ls.iter().map(|v| v.exp()).collect(), noise_variance),
            None => Err(Error::domain("empty log-hyperparameter vector")),
        }
    }

    /// `[log output_scale, log length_scale_1, ...]`.
    pub fn log_params(&self) -> Vec<f64> {
        std::iter::once(self.output_scale.ln())
            .chain(self.length_scales.iter().map(|l| l.ln()))
            .collect()
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }
}

/// Scaled distance `r = sqrt(sum_i ((x_i - y_i) / l_i)^2)`.
fn scaled_distance(x: &[f64], y: &[f64], length_scales: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(length_scales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Matérn 5/2 kernel with ARD length scales:
/// `s (1 + sqrt5 r + 5/3 r^2) exp(-sqrt5 r)`.
pub fn matern52_ard(x: &[f64], y: &[f64], hp: &Hyperparameters) -> f64 {
    let r = scaled_distance(x, y, &hp.length_scales);
    let sr = SQRT5 * r;
    hp.output_scale * (1.0 + sr + sr * sr / 3.0) * (-sr).exp()
}

/// Observed data in raw units plus the normalised/standardised views used by
/// the GP.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    bounds: Bounds,
    inputs_raw: Vec<Vec<f64>>,
    outputs_raw: Vec<f64>,
    inputs_unit: Vec<Vec<f64>>,
    outputs: Standardized,
}

impl Dataset {
    pub fn new(bounds: Bounds, inputs_raw: Vec<Vec<f64>>, outputs_raw: Vec<f64>) -> Result<Self> {
        if inputs_raw.len() != outputs_raw.len() {
            return Err(Error::domain(format!(
                "{} inputs but {} outputs",
                inputs_raw.len(),
                outputs_raw.len()
            )));
        }
        let inputs_unit = inputs_raw
            .iter()
            .map(|x| normalize_inputs(x, &bounds))
            .collect::<Result<Vec<_>>>()?;
        let outputs = standardize_outputs(&outputs_raw)?;
        Ok(Self { bounds, inputs_raw, outputs_raw, inputs_unit, outputs })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.outputs_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs_raw.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn inputs_raw(&self) -> &[Vec<f64>] {
        &self.inputs_raw
    }

    pub fn outputs_raw(&self) -> &[f64] {
        &self.outputs_raw
    }

    pub fn inputs_unit(&self) -> &[Vec<f64>] {
        &self.inputs_unit
    }

    pub fn outputs_std(&self) -> &[f64] {
        &self.outputs.values
    }

    pub fn standardization(&self) -> &Standardized {
        &self.outputs
    }

    /// Incumbent minimum on the standardised scale.
    pub fn best_std(&self) -> f64 {
        self.outputs.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_hp(&self, hp: &Hyperparameters) -> Result<()> {
        if self.is_empty() {
            return Err(Error::domain("dataset has no observations"));
        }
        if hp.dim() != self.dim() {
            return Err(Error::domain(format!(
                "hyperparameters have {} length scales, data has dimension {}",
                hp.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Predictive means and (latent) variances on the standardised scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPrediction {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

fn noisy_gram(inputs: &[Vec<f64>], hp: &Hyperparameters) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.output_scale + hp.noise_variance;
        for j in 0..i {
            let v = matern52_ard(&inputs[i], &inputs[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `k`, escalating diagonal jitter through [`JITTER_LEVELS`].
/// Returns the factor and the jitter that was added.
fn factorize(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let n = k.nrows();
    for &jitter in &JITTER_LEVELS {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
    }
    Err(Error::Cholesky { jitters: JITTER_LEVELS.to_vec() })
}

/// A conditioned GP: the Cholesky factor and weight vector for one
/// `(dataset, hyperparameters)` pair, reusable across many queries.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    inputs: Vec<Vec<f64>>,
    hp: Hyperparameters,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpPosterior {
    pub fn new(data: &Dataset, hp: &Hyperparameters) -> Result<Self> {
        data.check_hp(hp)?;
        let (chol, jitter) = factorize(noisy_gram(data.inputs_unit(), hp))?;
        let z = DVector::from_column_slice(data.outputs_std());
        let alpha = chol.solve(&z);
        Ok(Self {
            inputs: data.inputs_unit().to_vec(),
            hp: hp.clone(),
            chol,
            alpha,
            jitter,
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    /// Diagonal jitter that was needed on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Predictive mean and latent variance at one unit-cube point.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k_star = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| matern52_ard(xi, x, &self.hp)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor has a positive diagonal");
        let var = (self.hp.output_scale - v.norm_squared()).max(0.0);
        (mean, var)
    }

    pub fn predict_many(&self, queries: &[Vec<f64>]) -> PosteriorPrediction {
        let (means, variances) = queries.iter().map(|q| self.predict(q)).unzip();
        PosteriorPrediction { means, variances }
    }
}

/// Posterior predictive at `queries` (unit-cube rows).
pub fn gp_posterior(
    data: &Dataset,
    hp: &Hyperparameters,
    queries: &[Vec<f64>],
) -> Result<PosteriorPrediction> {
    let post = GpPosterior::new(data, hp)?;
    if let Some(q) = queries.iter().find(|q| q.len() != data.dim()) {
        return Err(Error::domain(format!(
            "query has {} coordinates, data has dimension {}",
            q.len(),
            data.dim()
        )));
    }
    Ok(post.predict_many(queries))
}

/// Log marginal likelihood of the standardised outputs and its gradient with
/// respect to `[log output_scale, log length_scale_1, ...]`.
pub fn log_marginal_likelihood(data: &Dataset, hp: &Hyperparameters) -> Result<(f64, Vec<f64>)> {
    data.check_hp(hp)?;
    let x = data.inputs_unit();
    let n = x.len();
    let d = hp.dim();
    let (chol, _) = factorize(noisy_gram(x, hp))?;
    let z = DVector::from_column_slice(data.outputs_std());
    let alpha = chol.solve(&z);

    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * z.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

    // dL/dtheta = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta)
    let k_inv = chol.inverse();
    let mut grad = vec![0.0; 1 + d];
    for i in 0..n {
        // diagonal: only the output scale contributes
        let w_ii = alpha[i] * alpha[i] - k_inv[(i, i)];
        grad[0] += 0.5 * w_ii * hp.output_scale;
        for j in 0..i {
            // off-diagonal pairs counted twice
            let w = alpha[i] * alpha[j] - k_inv[(i, j)];
            let r = scaled_distance(&x[i], &x[j], &hp.length_scales);
            let sr = SQRT5 * r;
            let e = (-sr).exp();
            let k = hp.output_scale * (1.0 + sr + sr * sr / 3.0) * e;
            grad[0] += w * k;
            let common = hp.output_scale * (5.0 / 3.0) * (1.0 + sr) * e;
            for (c, g) in grad[1..].iter_mut().enumerate() {
                let delta = (x[i][c] - x[j][c]) / hp.length_scales[c];
                *g += w * common * delta * delta;
            }
        }
    }
    Ok((value, grad))
}
