//! Per-step regret percentiles and end-of-budget histograms.

use std::collections::BTreeMap;

use fbo_core::bo_loop::Method;
use serde::Serialize;

use crate::records::RegretRecord;
use crate::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileRow {
    pub step: usize,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub count: usize,
}

/// Percentile of an ascending sample with linear interpolation between order
/// statistics (`h = (n - 1) q`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn regrets_by_step(records: &[RegretRecord], method: Method) -> BTreeMap<usize, Vec<f64>> {
    let mut by_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.method == method) {
        by_step.entry(r.step).or_default().push(r.regret);
    }
    for v in by_step.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    by_step
}

/// Median, 10th and 90th percentile of regret across seeds at every step.
pub fn aggregate_percentiles(records: &[RegretRecord], method: Method) -> Result<Vec<PercentileRow>> {
    let by_step = regrets_by_step(records, method);
    if by_step.is_empty() {
        return Err(BenchError::Config(format!("no records for method {method}")));
    }
    Ok(by_step
        .into_iter()
        .map(|(step, v)| PercentileRow {
            step,
            median: percentile(&v, 0.5),
            p10: percentile(&v, 0.1),
            p90: percentile(&v, 0.9),
            count: v.len(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Counts in `bins` equal-width bins over `[0, upper]`; the last bin is
/// closed on the right.
pub fn histogram_over(values: &[f64], bins: usize, upper: f64) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let upper = if upper > 0.0 { upper } else { 1.0 };
    let width = upper / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = ((v / width).floor().max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: i as f64 * width,
            upper: if i + 1 == bins { upper } else { (i + 1) as f64 * width },
            count,
        })
        .collect()
}

/// Regret histogram at `step` over `[0, max regret]`.
pub fn emit_histogram(records: &[RegretRecord], method: Method, step: usize, bins: usize) -> Result<Vec<HistogramBin>> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method && r.step == step)
        .map(|r| r.regret)
        .collect();
    if values.is_empty() {
        return Err(BenchError::Config(format!("no {method} records at step {step}")));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(histogram_over(&values, bins, max))
}

pub fn write_percentiles<W: std::io::Write>(out: W, rows: &[PercentileRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "median", "p10", "p90", "count"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.median.to_string(),
            r.p10.to_string(),
            r.p90.to_string(),
            r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram<W: std::io::Write>(out: W, bins: &[HistogramBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lower", "upper", "count"])?;
    for b in bins {
        w.write_record([b.lower.to_string(), b.upper.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
