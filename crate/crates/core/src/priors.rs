//! Log-normal hyperparameter priors, parameterised by the moments of the
//! log-normal itself and evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// A log-normal prior stored through the parameters of its underlying normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub mu_n: f64,
    pub sigma_n: f64,
    pub target_mean: f64,
    pub target_std: f64,
}

impl LogNormalSpec {
    /// Moment matching: the normal `(mu_n, sigma_n)` whose exponential has
    /// the requested mean and standard deviation.
    pub fn from_moments(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::domain(format!("log-normal mean must be positive, got {mean}")));
        }
        if !(std.is_finite() && std >= 0.0) {
            return Err(Error::domain(format!("log-normal std must be non-negative, got {std}")));
        }
        let v = (std * std / (mean * mean)).ln_1p();
        Ok(Self {
            mu_n: mean.ln() - 0.5 * v,
            sigma_n: v.sqrt(),
            target_mean: mean,
            target_std: std,
        })
    }

    pub fn mean(&self) -> f64 {
        (self.mu_n + 0.5 * self.sigma_n * self.sigma_n).exp()
    }

    pub fn std(&self) -> f64 {
        let s2 = self.sigma_n * self.sigma_n;
        (s2.exp_m1() * (2.0 * self.mu_n + s2).exp()).sqrt()
    }

    /// Normal log density of `u = log(theta)` and its derivative in `u`.
    pub fn log_density_in_log_space(&self, u: f64) -> (f64, f64) {
        let t = (u - self.mu_n) / self.sigma_n;
        (-0.5 * t * t - self.sigma_n.ln() - HALF_LN_2PI, -t / self.sigma_n)
    }
}

/// Free-function form of [`LogNormalSpec::from_moments`].
pub fn lognormal_from_moments(mean: f64, std: f64) -> Result<LogNormalSpec> {
    LogNormalSpec::from_moments(mean, std)
}

/// Independent priors for the output scale and the (shared) length scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub output_scale: LogNormalSpec,
    pub length_scale: LogNormalSpec,
}

impl PriorSet {
    pub fn from_moments(
        output_scale_mean: f64,
        output_scale_std: f64,
        length_scale_mean: f64,
        length_scale_std: f64,
    ) -> Result<Self> {
        let set = Self {
            output_scale: LogNormalSpec::from_moments(output_scale_mean, output_scale_std)?,
            length_scale: LogNormalSpec::from_moments(length_scale_mean, length_scale_std)?,
        };
        if set.output_scale.sigma_n <= 0.0 || set.length_scale.sigma_n <= 0.0 {
            return Err(Error::domain("prior standard deviations must be positive to define a density"));
        }
        Ok(set)
    }

    /// Output scale: mean 10, std 10. Length scales: mean 0.5, std 0.5.
    pub fn benchmark() -> Self {
        Self::from_moments(10.0, 10.0, 0.5, 0.5).expect("benchmark priors are valid")
    }

    /// Prior means of the underlying normals, `[mu_output, mu_length; dim]`.
    pub fn log_space_centre(&self, dim: usize) -> Vec<f64> {
        std::iter::once(self.output_scale.mu_n)
            .chain(std::iter::repeat_n(self.length_scale.mu_n, dim))
            .collect()
    }

    fn component(&self, i: usize) -> &LogNormalSpec {
        if i == 0 {
            &self.output_scale
        } else {
            &self.length_scale
        }
    }

    /// Joint log density and gradient at `[log output_scale, log l_1, ...]`.
    pub fn log_density_with_grad(&self, log_hp: &[f64], dim: usize) -> Result<(f64, Vec<f64>)> {
        if log_hp.len() != 1 + dim {
            return Err(Error::domain(format!(
                "expected {} log-hyperparameters, got {}",
                1 + dim,
                log_hp.len()
            )));
        }
        let mut total = 0.0;
        let grad = log_hp
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let (lp, g) = self.component(i).log_density_in_log_space(u);
                total += lp;
                g
            })
            .collect();
        Ok((total, grad))
    }
}

impl Default for PriorSet {
    fn default() -> Self {
        Self::benchmark()
    }
}

/// Sum of the per-component log-normal densities in log space (the change of
/// variables Jacobian is included, so this is a density over `log theta`).
pub fn log_prior_density(log_hp: &[f64], priors: &PriorSet, dim: usize) -> Result<f64> {
    priors.log_density_with_grad(log_hp, dim).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_matching_examples() {
        let s = lognormal_from_moments(10.0, 10.0).unwrap();
        assert!((s.mu_n - 1.95601).abs() < 1e-5);
        assert!((s.sigma_n - 0.83256).abs() < 1e-5);
        let s = lognormal_from_moments(0.5, 0.5).unwrap();
        assert!((s.mu_n + 1.03972).abs() < 1e-5);
        assert!((s.sigma_n - 0.83256).abs() < 1e-5);
        let s = lognormal_from_moments(1.0, 0.0).unwrap();
        assert_eq!((s.mu_n, s.sigma_n), (0.0, 0.0));
    }

    #[test]
    fn moments_reconstruct() {
        for &(m, sd) in &[(10.0, 10.0), (0.5, 0.5), (3.0, 0.1), (1e-2, 5.0)] {
            let s = lognormal_from_moments(m, sd).unwrap();
            assert!((s.mean() - m).abs() <= 1e-9 * m);
            assert!((s.std() - sd).abs() <= 1e-9 * sd);
        }
    }

    #[test]
    fn invalid_moments() {
        assert!(lognormal_from_moments(0.0, 1.0).is_err());
        assert!(lognormal_from_moments(-1.0, 1.0).is_err());
        assert!(lognormal_from_moments(1.0, -1.0).is_err());
        assert!(PriorSet::from_moments(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sigma_increases_with_std() {
        let mut prev = 0.0;
        for k in 1..50 {
            let s = lognormal_from_moments(2.0, 0.1 * k as f64).unwrap();
            assert!(s.sigma_n > prev);
            prev = s.sigma_n;
        }
    }

    #[test]
    fn mode_value_and_maximum() {
        let spec = LogNormalSpec { mu_n: 0.7, sigma_n: 1.0, target_mean: 1.0, target_std: 1.0 };
        let (v, g) = spec.log_density_in_log_space(0.7);
        assert!((v + 0.91894).abs() < 1e-5);
        assert_eq!(g, 0.0);
        for du in [-1.0, -0.1, 0.1, 2.0] {
            assert!(spec.log_density_in_log_space(0.7 + du).0 < v);
        }
    }

    #[test]
    fn joint_is_sum_of_components() {
        let p = PriorSet::benchmark();
        let u = [1.3, -0.2, -2.5];
        let joint = log_prior_density(&u, &p, 2).unwrap();
        let parts = p.output_scale.log_density_in_log_space(u[0]).0
            + p.length_scale.log_density_in_log_space(u[1]).0
            + p.length_scale.log_density_in_log_space(u[2]).0;
        assert!((joint - parts).abs() < 1e-14);
        assert!(log_prior_density(&u, &p, 3).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = PriorSet::benchmark();
        let u = [0.4, -1.7, 0.2];
        let (_, g) = p.log_density_with_grad(&u, 2).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut up = u;
            let mut dn = u;
            up[i] += h;
            dn[i] -= h;
            let fd = (log_prior_density(&up, &p, 2).unwrap() - log_prior_density(&dn, &p, 2).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }
}
