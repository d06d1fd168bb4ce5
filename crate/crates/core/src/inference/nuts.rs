//! Hamiltonian Monte Carlo with No-U-Turn trajectory termination.
//!
//! Multinomial NUTS with a diagonal unit mass matrix: trajectories are built
//! by repeated doubling, terminated by the generalised U-turn criterion
//! (including the checks across merged subtrees), and the next state is drawn
//! from the trajectory with weights `exp(-H)`. Step size is tuned during
//! warmup by dual averaging.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Energy error beyond which a trajectory is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Divergent fraction of sampling iterations above which a chain is rejected.
pub const MAX_DIVERGENT_FRACTION: f64 = 0.2;

/// An unnormalised log density with gradient.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Log density at `x`; writes the gradient into `grad`. A non-finite
    /// return value marks `x` as outside the usable support.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_and_grad(x, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub warmup: usize,
    pub draws: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { warmup: 512, draws: 256, thin: 16, target_accept: 0.8, max_tree_depth: 10, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.draws == 0 || !self.draws.is_multiple_of(self.thin) {
            return Err(Error::domain(format!(
                "draws ({}) must be a positive multiple of thin ({})",
                self.draws, self.thin
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::domain(format!("target_accept {} must lie in (0, 1)", self.target_accept)));
        }
        Ok(())
    }

    /// Number of draws kept after thinning.
    pub fn kept(&self) -> usize {
        self.draws / self.thin
    }
}

/// Position, momentum and the cached density/gradient at the position.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity>(target: &T, position: Vec<f64>, momentum: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_and_grad(&position, &mut grad);
        Self { position, momentum, grad, log_density }
    }

    /// `-log p(q) + |p|^2 / 2`.
    pub fn energy(&self) -> f64 {
        -self.log_density + 0.5 * self.momentum.iter().map(|v| v * v).sum::<f64>()
    }

    fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// One velocity-Verlet step: half momentum, full position, half momentum.
/// A negative `step_size` integrates backwards in time.
pub fn leapfrog<T: LogDensity>(target: &T, point: &PhasePoint, step_size: f64) -> PhasePoint {
    let half = 0.5 * step_size;
    let mut momentum: Vec<f64> = point.momentum.iter().zip(&point.grad).map(|(p, g)| p + half * g).collect();
    let position: Vec<f64> = point.position.iter().zip(&momentum).map(|(q, p)| q + step_size * p).collect();
    let mut grad = vec![0.0; position.len()];
    let log_density = target.log_density_and_grad(&position, &mut grad);
    for (p, g) in momentum.iter_mut().zip(&grad) {
        *p += half * g;
    }
    PhasePoint { position, momentum, grad, log_density }
}

/// Leapfrog on bare `(position, momentum)`, recomputing the starting
/// gradient. Returns `None` when the gradient is non-finite anywhere along
/// the step, which callers treat as a divergence.
pub fn leapfrog_step<T: LogDensity>(
    target: &T,
    position: &[f64],
    momentum: &[f64],
    step_size: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let start = PhasePoint::new(target, position.to_vec(), momentum.to_vec());
    if !start.is_finite() {
        return None;
    }
    let end = leapfrog(target, &start, step_size);
    end.grad.iter().all(|g| g.is_finite()).then_some((end.position, end.momentum))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Not turning iff both end momenta have positive projection on `rho`.
fn is_turning(p_begin: &[f64], p_end: &[f64], rho: &[f64]) -> bool {
    dot(p_begin, rho) <= 0.0 || dot(p_end, rho) <= 0.0
}

/// A contiguous run of leapfrog states in the order they were generated.
#[derive(Debug, Clone)]
struct Subtree {
    first: PhasePoint,
    last: PhasePoint,
    proposal: PhasePoint,
    rho: Vec<f64>,
    log_sum_weight: f64,
}

impl Subtree {
    fn leaf(point: PhasePoint, log_weight: f64) -> Self {
        Self {
            rho: point.momentum.clone(),
            first: point.clone(),
            last: point.clone(),
            proposal: point,
            log_sum_weight: log_weight,
        }
    }
}

/// U-turn checks after joining `a` (generated first) and `b` (generated
/// second, continuing from `a.last`).
fn merged_is_turning(a: &Subtree, b: &Subtree, rho: &[f64]) -> bool {
    if is_turning(&a.first.momentum, &b.last.momentum, rho) {
        return true;
    }
    let rho_a_ext = add(&a.rho, &b.first.momentum);
    if is_turning(&a.first.momentum, &b.first.momentum, &rho_a_ext) {
        return true;
    }
    let rho_b_ext = add(&b.rho, &a.last.momentum);
    is_turning(&a.last.momentum, &b.last.momentum, &rho_b_ext)
}

#[derive(Debug, Default)]
struct TreeStats {
    sum_accept: f64,
    n_leapfrog: usize,
    divergent: bool,
}

struct Builder<'a, T, R> {
    target: &'a T,
    step: f64,
    h0: f64,
    rng: &'a mut R,
    stats: TreeStats,
}

impl<T: LogDensity, R: Rng> Builder<'_, T, R> {
    /// Build `2^depth` new states continuing from `from`. `None` means the
    /// subtree diverged or turned and must be discarded.
    fn build(&mut self, from: &PhasePoint, depth: usize) -> Option<Subtree> {
        if depth == 0 {
            let next = leapfrog(self.target, from, self.step);
            self.stats.n_leapfrog += 1;
            let h = next.energy();
            let delta = h - self.h0;
            if !next.is_finite() || !h.is_finite() || delta > DIVERGENCE_THRESHOLD {
                self.stats.divergent = true;
                return None;
            }
            self.stats.sum_accept += (-delta).exp().min(1.0);
            return Some(Subtree::leaf(next, -delta));
        }

        let a = self.build(from, depth - 1)?;
        let b = self.build(&a.last, depth - 1)?;
        let rho = add(&a.rho, &b.rho);
        if merged_is_turning(&a, &b, &rho) {
            return None;
        }
        let log_sum_weight = log_add_exp(a.log_sum_weight, b.log_sum_weight);
        let take_b = self.rng.random::<f64>().ln() < b.log_sum_weight - log_sum_weight;
        let proposal = if take_b { b.proposal } else { a.proposal };
        Some(Subtree { first: a.first, last: b.last, proposal, rho, log_sum_weight })
    }
}

/// Result of one NUTS iteration.
#[derive(Debug, Clone)]
pub struct Transition {
    pub point: PhasePoint,
    /// Mean Metropolis acceptance probability over all built states.
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
}

/// One NUTS iteration from `current` (its momentum is ignored and resampled).
///
/// The trajectory doubles at most `max(max_tree_depth, 1)` times, so a depth
/// cap of 0 or 1 reduces to a single leapfrog proposal.
pub fn nuts_transition<T: LogDensity, R: Rng>(
    target: &T,
    current: &PhasePoint,
    step_size: f64,
    max_tree_depth: usize,
    rng: &mut R,
) -> Transition {
    let mut start = current.clone();
    for p in start.momentum.iter_mut() {
        *p = rng.sample(StandardNormal);
    }
    let h0 = start.energy();

    // Whole trajectory, spatially ordered: `left` is the backward end.
    let mut left = start.clone();
    let mut right = start.clone();
    let mut rho = start.momentum.clone();
    let mut log_sum_weight = 0.0;
    let mut proposal = start;

    let mut builder = Builder { target, step: step_size, h0, rng, stats: TreeStats::default() };
    let mut depth = 0;
    while depth < max_tree_depth.max(1) {
        let forward = builder.rng.random::<bool>();
        builder.step = if forward { step_size } else { -step_size };
        let from = if forward { right.clone() } else { left.clone() };
        let Some(sub) = builder.build(&from, depth) else {
            depth += 1;
            break;
        };
        depth += 1;

        if builder.rng.random::<f64>().ln() < sub.log_sum_weight - log_sum_weight {
            proposal = sub.proposal.clone();
        }
        log_sum_weight = log_add_exp(log_sum_weight, sub.log_sum_weight);

        // Existing trajectory as a subtree oriented toward the new one.
        let (near, far) = if forward { (&right, &left) } else { (&left, &right) };
        let existing = Subtree {
            first: far.clone(),
            last: near.clone(),
            proposal: proposal.clone(),
            rho: rho.clone(),
            log_sum_weight,
        };
        rho = add(&rho, &sub.rho);
        let turning = merged_is_turning(&existing, &sub, &rho);
        if forward {
            right = sub.last;
        } else {
            left = sub.last;
        }
        if turning {
            break;
        }
    }

    let stats = builder.stats;
    let accept_stat = if stats.n_leapfrog > 0 { stats.sum_accept / stats.n_leapfrog as f64 } else { 0.0 };
    Transition {
        point: proposal,
        accept_stat,
        divergent: stats.divergent,
        depth,
        n_leapfrog: stats.n_leapfrog,
    }
}

/// Nesterov dual averaging of `log(step_size)` toward a target acceptance.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_step: f64,
    log_step_bar: f64,
    iteration: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_step: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * initial_step).ln(),
            target,
            h_bar: 0.0,
            log_step: initial_step.ln(),
            log_step_bar: 0.0,
            iteration: 0.0,
        }
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.iteration += 1.0;
        let m = self.iteration;
        let eta = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat);
        self.log_step = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let w = m.powf(-Self::KAPPA);
        self.log_step_bar = w * self.log_step + (1.0 - w) * self.log_step_bar;
    }

    /// Step size to use for the next warmup iteration.
    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    /// Averaged step size, used once adaptation stops.
    pub fn final_step(&self) -> f64 {
        if self.iteration == 0.0 {
            self.current()
        } else {
            self.log_step_bar.exp()
        }
    }
}

/// Doubling/halving search for a step size whose single-step acceptance
/// crosses 1/2.
fn initial_step_size<T: LogDensity, R: Rng>(target: &T, point: &PhasePoint, rng: &mut R) -> f64 {
    let mut step = 1.0;
    let mut start = point.clone();
    for p in start.momentum.iter_mut() {
        *p = rng.sample(StandardNormal);
    }
    let h0 = start.energy();
    let log_ratio = |step: f64| {
        let h = leapfrog(target, &start, step).energy();
        if h.is_finite() { h0 - h } else { f64::NEG_INFINITY }
    };
    let direction = if log_ratio(step) > 0.5f64.ln() { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let lr = log_ratio(step);
        if direction * lr <= -direction * std::f64::consts::LN_2 {
            break;
        }
        step *= 2.0f64.powf(direction);
    }
    step
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    /// Mean acceptance statistic over sampling iterations.
    pub mean_accept: f64,
    pub step_size: f64,
    /// Divergent sampling iterations.
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub mean_tree_depth: f64,
    pub n_leapfrog: usize,
}

/// Kept (thinned, post-warmup) positions of a single chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub diagnostics: SamplerDiagnostics,
}

/// Run one NUTS chain on `target` from `init`.
///
/// Warmup iterations adapt the step size and are discarded; of the `draws`
/// sampling iterations, indices `thin - 1, 2 thin - 1, ...` are kept.
pub fn sample_target<T: LogDensity>(target: &T, init: &[f64], cfg: &SamplerConfig) -> Result<Chain> {
    cfg.validate()?;
    if init.len() != target.dim() {
        return Err(Error::domain(format!("initial point has {} coordinates, target has {}", init.len(), target.dim())));
    }
    let mut rng = StreamRng::seed_from_u64(cfg.seed);
    let mut point = PhasePoint::new(target, init.to_vec(), vec![0.0; init.len()]);
    if !point.is_finite() {
        return Err(Error::Inference("log target is non-finite at the initial point".into()));
    }

    let mut adapt = DualAveraging::new(initial_step_size(target, &point, &mut rng), cfg.target_accept);
    let mut diagnostics = SamplerDiagnostics::default();
    for _ in 0..cfg.warmup {
        let t = nuts_transition(target, &point, adapt.current(), cfg.max_tree_depth, &mut rng);
        adapt.update(t.accept_stat);
        diagnostics.warmup_divergences += t.divergent as usize;
        diagnostics.n_leapfrog += t.n_leapfrog;
        point = t.point;
    }

    let step = adapt.final_step();
    let mut draws = Vec::with_capacity(cfg.kept());
    let (mut accept_sum, mut depth_sum) = (0.0, 0usize);
    for i in 0..cfg.draws {
        let t = nuts_transition(target, &point, step, cfg.max_tree_depth, &mut rng);
        accept_sum += t.accept_stat;
        depth_sum += t.depth;
        diagnostics.divergences += t.divergent as usize;
        diagnostics.n_leapfrog += t.n_leapfrog;
        point = t.point;
        if (i + 1) % cfg.thin == 0 {
            draws.push(point.position.clone());
        }
    }
    diagnostics.mean_accept = accept_sum / cfg.draws as f64;
    diagnostics.mean_tree_depth = depth_sum as f64 / cfg.draws as f64;
    diagnostics.step_size = step;

    let fraction = diagnostics.divergences as f64 / cfg.draws as f64;
    if fraction > MAX_DIVERGENT_FRACTION {
        return Err(Error::Inference(format!(
            "{} of {} sampling iterations diverged (step size {:.3e}, mean accept {:.3})",
            diagnostics.divergences, cfg.draws, step, diagnostics.mean_accept
        )));
    }
    Ok(Chain { draws, diagnostics })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Zero-mean Gaussian with precision matrix `precision` (row-major).
    pub(crate) struct Gaussian {
        pub precision: Vec<Vec<f64>>,
    }

    impl Gaussian {
        pub(crate) fn standard(dim: usize) -> Self {
            let precision = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            Self { precision }
        }
    }

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            self.precision.len()
        }

        fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut v = 0.0;
            for (i, row) in self.precision.iter().enumerate() {
                grad[i] = -dot(row, x);
                v += 0.5 * x[i] * grad[i];
            }
            v
        }
    }

    struct Flat;

    impl LogDensity for Flat {
        fn dim(&self) -> usize {
            2
        }

        fn log_density_and_grad(&self, _: &[f64], grad: &mut [f64]) -> f64 {
            grad.fill(0.0);
            0.0
        }
    }

    #[test]
    fn leapfrog_is_reversible() {
        let target = Gaussian { precision: vec![vec![2.0, 0.3], vec![0.3, 0.5]] };
        let (q1, p1) = leapfrog_step(&target, &[0.4, -1.1], &[0.7, 0.2], 0.13).unwrap();
        let back: Vec<f64> = p1.iter().map(|v| -v).collect();
        let (q0, p0) = leapfrog_step(&target, &q1, &back, 0.13).unwrap();
        for (a, b) in q0.iter().zip([0.4, -1.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in p0.iter().zip([0.7, 0.2]) {
            assert!((-a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn free_particle_drifts_linearly() {
        let (q, p) = leapfrog_step(&Flat, &[1.0, 2.0], &[0.5, -0.25], 0.2).unwrap();
        assert_eq!(q, vec![1.1, 1.95]);
        assert_eq!(p, vec![0.5, -0.25]);
    }

    #[test]
    fn energy_error_is_third_order_per_step() {
        let target = Gaussian::standard(1);
        let err = |eps: f64| {
            let start = PhasePoint::new(&target, vec![0.8], vec![0.6]);
            (leapfrog(&target, &start, eps).energy() - start.energy()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 8.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn depth_zero_is_single_leapfrog() {
        let target = Gaussian::standard(2);
        let start = PhasePoint::new(&target, vec![0.1, 0.2], vec![0.0; 2]);
        let mut rng = StreamRng::seed_from_u64(5);
        let t = nuts_transition(&target, &start, 0.3, 0, &mut rng);
        assert_eq!(t.n_leapfrog, 1);
        assert_eq!(t.depth, 1);
    }

    #[test]
    fn standard_normal_moments_and_determinism() {
        let target = Gaussian::standard(3);
        let cfg = SamplerConfig { warmup: 500, draws: 4000, thin: 4, seed: 11, ..Default::default() };
        let chain = sample_target(&target, &[0.5, -0.5, 1.0], &cfg).unwrap();
        assert_eq!(chain.draws.len(), 1000);
        assert_eq!(chain.diagnostics.divergences, 0);
        for k in 0..3 {
            let xs: Vec<f64> = chain.draws.iter().map(|d| d[k]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            assert!(m.abs() < 0.1, "mean {m}");
            assert!((v - 1.0).abs() < 0.15, "var {v}");
        }
        assert!((chain.diagnostics.mean_accept - 0.8).abs() < 0.1, "{:?}", chain.diagnostics);
        let again = sample_target(&target, &[0.5, -0.5, 1.0], &cfg).unwrap();
        assert_eq!(chain, again);
    }

    #[test]
    fn correlated_normal_correlation() {
        // covariance [[1, 0.8], [0.8, 1]]
        let det = 1.0 - 0.64;
        let target = Gaussian { precision: vec![vec![1.0 / det, -0.8 / det], vec![-0.8 / det, 1.0 / det]] };
        let cfg = SamplerConfig { warmup: 500, draws: 4000, thin: 2, seed: 3, ..Default::default() };
        let chain = sample_target(&target, &[0.0, 0.0], &cfg).unwrap();
        let n = chain.draws.len() as f64;
        let mean = |k: usize| chain.draws.iter().map(|d| d[k]).sum::<f64>() / n;
        let (m0, m1) = (mean(0), mean(1));
        let cov = chain.draws.iter().map(|d| (d[0] - m0) * (d[1] - m1)).sum::<f64>() / n;
        let v0 = chain.draws.iter().map(|d| (d[0] - m0).powi(2)).sum::<f64>() / n;
        let v1 = chain.draws.iter().map(|d| (d[1] - m1).powi(2)).sum::<f64>() / n;
        let corr = cov / (v0 * v1).sqrt();
        assert!((corr - 0.8).abs() < 0.1, "{corr}");
    }

    #[test]
    fn thinning_count() {
        let cfg = SamplerConfig { warmup: 20, seed: 1, ..Default::default() };
        let chain = sample_target(&Gaussian::standard(2), &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(chain.draws.len(), 16);
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig { draws: 250, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { target_accept: 1.0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { thin: 0, ..Default::default() }.validate().is_err());
    }

    struct Broken;

    impl LogDensity for Broken {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_and_grad(&self, _: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = 0.0;
            f64::NAN
        }
    }

    #[test]
    fn non_finite_initial_target_is_an_error() {
        let err = sample_target(&Broken, &[0.0], &SamplerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Inference(_)));
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(1.0, 0.8);
        for _ in 0..50 {
            da.update(0.2);
        }
        assert!(da.final_step() < 1.0);
        let mut da = DualAveraging::new(1.0, 0.8);
        for _ in 0..50 {
            da.update(1.0);
        }
        assert!(da.final_step() > 1.0);
    }
}
