use fbo_core::gp::Bounds;
use fbo_core::rng::{substream, Role};
use rand::Rng;

const A: f64 = 20.0;
const B: f64 = 0.2;
const C: f64 = 2.0 * std::f64::consts::PI;

/// Global minimum value, attained at the origin.
pub const ACKLEY_MIN: f64 = 0.0;

/// Half-width of the benchmark domain in every coordinate.
pub const ACKLEY_HALF_WIDTH: f64 = 32.768;

/// Ackley function with `a = 20`, `b = 0.2`, `c = 2 pi`, in any dimension.
pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let mean_cos = x.iter().map(|v| (C * v).cos()).sum::<f64>() / d;
    // grouped so that the value at the origin is exactly zero
    (A - A * (-B * mean_sq.sqrt()).exp()) + (1f64.exp() - mean_cos.exp())
}

/// `[-32.768, 32.768]^dim`.
pub fn ackley_bounds(dim: usize) -> Bounds {
    Bounds::new(vec![(-ACKLEY_HALF_WIDTH, ACKLEY_HALF_WIDTH); dim]).expect("valid bounds")
}

/// Seeded uniform starting point over `bounds`, drawn from the
/// `(seed, 0, init)` substream.
pub fn initial_point(seed: u64, bounds: &Bounds) -> Vec<f64> {
    let mut rng = substream(seed, 0, Role::Init);
    bounds.pairs().iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
}
