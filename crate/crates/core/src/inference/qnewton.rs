//! Box-constrained limited-memory quasi-Newton minimisation.
//!
//! Each iteration fixes the variables sitting on a bound whose gradient
//! points outward, builds an L-BFGS direction on the remaining free
//! variables, and backtracks along the projected path
//! `P(x + t d)` until an Armijo decrease holds.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiNewtonOptions {
    pub max_iters: usize,
    /// Stop once the infinity norm of the projected gradient drops below this.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease of an accepted step falls
    /// below this. Zero disables the test.
    pub rel_ftol: f64,
    pub memory: usize,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-6, rel_ftol: 0.0, memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub projected_grad_norm: f64,
    pub termination: Termination,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| ((xi - gi).clamp(lo, hi) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimise `objective` over the box `bounds` starting from `start`.
///
/// `objective` returns the value and writes the gradient into its second
/// argument. Non-finite values away from the start are treated as rejected
/// trial points by the line search.
pub fn bounded_quasi_newton<F>(
    mut objective: F,
    bounds: &[(f64, f64)],
    start: &[f64],
    opts: &QuasiNewtonOptions,
) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = start.len();
    if bounds.len() != n {
        return Err(Error::domain(format!("start has {n} coordinates, box has {}", bounds.len())));
    }
    for (i, (&x, &(lo, hi))) in start.iter().zip(bounds).enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::domain(format!("box coordinate {i} has lower > upper")));
        }
        if !(x >= lo && x <= hi) {
            return Err(Error::domain(format!("start coordinate {i} = {x} outside [{lo}, {hi}]")));
        }
    }

    let mut x = start.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("objective or gradient is non-finite at the start point"));
    }

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;

    let termination = loop {
        let pg = projected_grad_norm(&x, &g, bounds);
        if pg <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }
        iterations += 1;

        // Variables pinned at a bound with the gradient pushing outward.
        let free: Vec<bool> = x
            .iter()
            .zip(&g)
            .zip(bounds)
            .map(|((&xi, &gi), &(lo, hi))| !((xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0)))
            .collect();
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&free).map(|(&a, &keep)| if keep { a } else { 0.0 }).collect()
        };

        // Two-loop recursion restricted to the free subspace.
        let mut q = mask(&g);
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(&mask(s), &q);
            for (qi, yi) in q.iter_mut().zip(mask(y)) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match memory.back() {
            Some((s, y, _)) => {
                let (sm, ym) = (mask(s), mask(y));
                let yy = dot(&ym, &ym);
                if yy > 0.0 { (dot(&sm, &ym) / yy).max(1e-12) } else { 1.0 }
            }
            None => 1.0,
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(&mask(y), &q);
            for (qi, si) in q.iter_mut().zip(mask(s)) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &g) >= 0.0 || dir.iter().any(|v| !v.is_finite()) {
            memory.clear();
            dir = mask(&g).iter().map(|v| -v).collect();
        }

        let mut t = if memory.is_empty() {
            let norm = dir.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if norm > 0.0 { (1.0 / norm).min(1.0) } else { 1.0 }
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = x[i] + t * dir[i];
            }
            project(&mut trial, bounds);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if step.iter().all(|&s| s == 0.0) {
                break;
            }
            let ft = objective(&trial, &mut g_trial);
            evaluations += 1;
            if ft.is_finite()
                && g_trial.iter().all(|v| v.is_finite())
                && ft <= f + 1e-4 * decrease
                && ft <= f
            {
                accepted = Some((ft, step));
                break;
            }
            t *= 0.5;
        }

        let Some((f_new, s)) = accepted else {
            break Termination::LineSearchFailed;
        };
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let f_old = f;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        f = f_new;
        if opts.rel_ftol > 0.0 && (f_old - f) <= opts.rel_ftol * f_old.abs().max(f.abs()).max(1.0) {
            break Termination::FunctionTolerance;
        }
    };

    Ok(Minimum {
        projected_grad_norm: projected_grad_norm(&x, &g, bounds),
        x,
        value: f,
        iterations,
        evaluations,
        termination,
    })
}

/// Central-difference gradient of `f` at `x`, with stencils clipped to `bounds`.
pub fn central_difference_gradient<F>(f: &mut F, x: &[f64], bounds: &[(f64, f64)], h: f64, grad: &mut [f64])
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let (lo, hi) = bounds[i];
        let up = (x[i] + h).min(hi);
        let dn = (x[i] - h).max(lo);
        probe[i] = up;
        let fu = f(&probe);
        probe[i] = dn;
        let fd = f(&probe);
        probe[i] = x[i];
        grad[i] = if up > dn { (fu - fd) / (up - dn) } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic() {
        let m = bounded_quasi_newton(
            |x, g| {
                g[0] = 2.0 * (x[0] - 0.3);
                (x[0] - 0.3).powi(2)
            },
            &[(0.0, 1.0)],
            &[0.9],
            &QuasiNewtonOptions::default(),
        )
        .unwrap();
        assert!((m.x[0] - 0.3).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn active_lower_bound() {
        let m = bounded_quasi_newton(
            |x, g| {
                g[0] = 1.0;
                x[0]
            },
            &[(0.2, 1.0)],
            &[0.7],
            &QuasiNewtonOptions::default(),
        )
        .unwrap();
        assert_eq!(m.x[0], 0.2);
        assert_eq!(m.termination, Termination::GradientTolerance);
    }

    #[test]
    fn rosenbrock() {
        let opts = QuasiNewtonOptions { max_iters: 1000, grad_tol: 1e-9, ..Default::default() };
        let m = bounded_quasi_newton(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[(-2.0, 2.0), (-2.0, 2.0)],
            &[-1.2, 1.0],
            &opts,
        )
        .unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn bound_constrained_rosenbrock_stays_in_box() {
        let m = bounded_quasi_newton(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[(-2.0, 0.5), (-2.0, 2.0)],
            &[-1.2, 1.0],
            &QuasiNewtonOptions { max_iters: 1000, ..Default::default() },
        )
        .unwrap();
        assert!((m.x[0] - 0.5).abs() < 1e-8 && (m.x[1] - 0.25).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn quartic_descends_to_interior_minimum() {
        let f = |x: &[f64]| x[0].powi(4) - 3.0 * x[0] + (x[1] + 0.5).powi(2);
        let start = [2.5, 2.5];
        let m = bounded_quasi_newton(
            |x, g| {
                g[0] = 4.0 * x[0].powi(3) - 3.0;
                g[1] = 2.0 * (x[1] + 0.5);
                f(x)
            },
            &[(-3.0, 3.0), (-3.0, 3.0)],
            &start,
            &QuasiNewtonOptions::default(),
        )
        .unwrap();
        assert!(m.value <= f(&start));
        assert!((m.x[0] - 0.75f64.cbrt()).abs() < 1e-6 && (m.x[1] + 0.5).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let err = bounded_quasi_newton(|_, _| f64::NAN, &[(0.0, 1.0)], &[0.5], &Default::default());
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = bounded_quasi_newton(|x, _| x[0], &[(0.0, 1.0)], &[1.5], &Default::default());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn finite_difference_gradient_clips_at_bounds() {
        let mut f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let mut g = [0.0; 2];
        central_difference_gradient(&mut f, &[1.0, 0.5], &[(0.0, 1.0), (0.0, 1.0)], 1e-6, &mut g);
        assert!((g[0] - 2.0).abs() < 1e-5);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }
}
