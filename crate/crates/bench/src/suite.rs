//! Seeded experiment suite: every `(seed, method)` pair runs independently;
//! file contents depend only on the configuration, never on the worker count.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use fbo_core::bo_loop::{regret, run_bo, History, Method};
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::{aggregate_percentiles, emit_histogram, write_histogram, write_percentiles};
use crate::config::SuiteConfig;
use crate::objective::{ackley, initial_point, ACKLEY_MIN};
use crate::records::{sort_records, write_records, write_timings, RegretRecord, RunError};
use crate::{BenchError, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
const STREAM_FILE: &str = "records.stream.csv";

#[derive(Debug, Clone)]
pub struct SuiteReport {
    /// Sorted by `(seed, method, step)`.
    pub records: Vec<RegretRecord>,
    pub errors: Vec<RunError>,
    pub wall_seconds: f64,
    /// Sum of per-step wall-clock seconds, by method.
    pub method_seconds: BTreeMap<Method, f64>,
    pub out_dir: PathBuf,
}

impl SuiteReport {
    pub fn is_success(&self) -> bool {
        self.errors.is_empty()
    }
}

struct RunOutcome {
    records: Vec<RegretRecord>,
    error: Option<RunError>,
}

fn to_records(seed: u64, method: Method, history: &History) -> std::result::Result<Vec<RegretRecord>, String> {
    let regrets = regret(history, ACKLEY_MIN).map_err(|e| e.to_string())?;
    Ok(history
        .entries
        .iter()
        .zip(regrets)
        .map(|(e, regret)| RegretRecord {
            seed,
            method,
            step: e.step,
            x: e.x.clone(),
            f: e.y,
            best_so_far: e.best_so_far,
            regret,
            seconds: e.seconds,
        })
        .collect())
}

fn run_one(cfg: &SuiteConfig, seed: u64, method: Method) -> RunOutcome {
    let fail = |step, message: String| RunError { seed, method, step, message };
    let x0 = initial_point(seed, &cfg.bounds());
    let run_cfg = match cfg.run_config(method, seed, x0) {
        Ok(c) => c,
        Err(e) => return RunOutcome { records: vec![], error: Some(fail(0, e.to_string())) },
    };
    let (history, error) = match run_bo(ackley, &run_cfg) {
        Ok(h) => (h, None),
        Err(f) => {
            let msg = f.source.to_string();
            (f.history, Some(fail(f.step, msg)))
        }
    };
    match to_records(seed, method, &history) {
        Ok(records) => RunOutcome { records, error },
        Err(msg) => RunOutcome { records: vec![], error: Some(fail(0, msg)) },
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    config: &'a SuiteConfig,
    runs: usize,
    records: usize,
    errors: &'a [RunError],
    wall_seconds: f64,
    method_seconds: &'a BTreeMap<Method, f64>,
}

/// Run every `(seed, method)` pair and write the output directory:
/// `records.csv`, `timings.csv`, `percentiles_<method>.csv`,
/// `hist_<method>_<N>.csv` and `manifest.json`.
///
/// Rows are appended to `records.stream.csv` as runs finish; the sorted
/// `records.csv` replaces it at the end.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let started = Instant::now();
    fs::create_dir_all(&cfg.out_dir)?;

    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let jobs: Vec<(u64, Method)> = cfg.seeds.iter().flat_map(|s| methods.iter().map(move |&m| (s, m))).collect();

    let stream_path = cfg.out_dir.join(STREAM_FILE);
    let stream = Mutex::new(BufWriter::new(File::create(&stream_path)?));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;

    let outcomes: Vec<RunOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(seed, method)| {
                let outcome = run_one(cfg, seed, method);
                let mut buf = Vec::new();
                let _ = write_records(&mut buf, &outcome.records, outcome.error.as_slice());
                if let Ok(mut w) = stream.lock() {
                    // drop the per-chunk header line
                    let body = buf.splitn(2, |&b| b == b'\n').nth(1).unwrap_or(&[]);
                    let _ = w.write_all(body).and_then(|_| w.flush());
                }
                match &outcome.error {
                    Some(e) => eprintln!("seed {seed} {method}: failed at step {}: {}", e.step, e.message),
                    None => eprintln!("seed {seed} {method}: done"),
                }
                outcome
            })
            .collect()
    });
    drop(stream);

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        records.extend(o.records);
        errors.extend(o.error);
    }
    sort_records(&mut records);
    errors.sort_by_key(|e| (e.seed, e.method, e.step));

    let mut method_seconds = BTreeMap::new();
    for r in &records {
        *method_seconds.entry(r.method).or_insert(0.0) += r.seconds;
    }

    write_records(BufWriter::new(File::create(cfg.out_dir.join(RECORDS_FILE))?), &records, &errors)?;
    write_timings(BufWriter::new(File::create(cfg.out_dir.join(TIMINGS_FILE))?), &records)?;
    write_summaries(&cfg.out_dir, &records, &methods, &cfg.histogram_steps(), cfg.hist_bins)?;
    fs::remove_file(&stream_path)?;

    let report = SuiteReport {
        records,
        errors,
        wall_seconds: started.elapsed().as_secs_f64(),
        method_seconds,
        out_dir: cfg.out_dir.clone(),
    };
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        runs: jobs.len(),
        records: report.records.len(),
        errors: &report.errors,
        wall_seconds: report.wall_seconds,
        method_seconds: &report.method_seconds,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(cfg.out_dir.join(MANIFEST_FILE))?), &manifest)?;
    Ok(report)
}

/// Percentile tables and histograms for every method present in `records`.
pub fn write_summaries(
    out_dir: &Path,
    records: &[RegretRecord],
    methods: &[Method],
    hist_steps: &[usize],
    bins: usize,
) -> Result<()> {
    for &method in methods {
        let Ok(rows) = aggregate_percentiles(records, method) else {
            continue;
        };
        write_percentiles(File::create(out_dir.join(format!("percentiles_{method}.csv")))?, &rows)?;
        for &step in hist_steps {
            if let Ok(h) = emit_histogram(records, method, step, bins) {
                write_histogram(File::create(out_dir.join(format!("hist_{method}_{step}.csv")))?, &h)?;
            }
        }
    }
    Ok(())
}
