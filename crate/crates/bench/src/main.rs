use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fbo_bench::config::parse_methods;
use fbo_bench::records::read_records;
use fbo_bench::suite::write_summaries;
use fbo_bench::{run_suite, FileConfig, SeedRange, SuiteConfig};
use fbo_core::bo_loop::Method;

#[derive(Parser)]
#[command(name = "fbo-bench", version, about = "ML-II vs fully Bayesian optimisation regret benchmark on Ackley")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the seeded suite and write records, percentiles and histograms.
    Run {
        /// mlii, fbo or both
        #[arg(long)]
        method: Option<String>,
        /// Inclusive seed range, e.g. 0..100
        #[arg(long)]
        seeds: Option<SeedRange>,
        #[arg(long)]
        budget: Option<usize>,
        /// Flat TOML config; flags override its values
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel runs (0 = all cores)
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute percentile and histogram tables from a records.csv.
    Aggregate {
        records: PathBuf,
        /// Output directory (defaults to the records file's directory)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Steps to histogram; defaults to 20 and the final step
        #[arg(long, value_delimiter = ',')]
        hist_steps: Vec<usize>,
    },
}

fn run(cli: Cli) -> fbo_bench::Result<bool> {
    match cli.command {
        Command::Run { method, seeds, budget, config, out, workers } => {
            let mut cfg = SuiteConfig::default();
            if let Some(path) = config {
                cfg.apply_file(&FileConfig::load(&path)?)?;
            }
            if let Some(m) = method {
                cfg.methods = parse_methods(&m)?;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let report = run_suite(&cfg)?;
            eprintln!(
                "{} records, {} failed runs, {:.1}s wall; per-method step time: {}",
                report.records.len(),
                report.errors.len(),
                report.wall_seconds,
                report
                    .method_seconds
                    .iter()
                    .map(|(m, s)| format!("{m} {s:.1}s"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            Ok(report.is_success())
        }
        Command::Aggregate { records, out, bins, hist_steps } => {
            let (recs, errors) = read_records(File::open(&records)?)?;
            let out = out.unwrap_or_else(|| records.parent().map(PathBuf::from).unwrap_or_default());
            fs::create_dir_all(&out)?;
            let last = recs.iter().map(|r| r.step).max().unwrap_or(0);
            let mut steps = if hist_steps.is_empty() { vec![20, last] } else { hist_steps };
            steps.retain(|&s| s <= last);
            steps.sort_unstable();
            steps.dedup();
            write_summaries(&out, &recs, &Method::ALL, &steps, bins)?;
            if !errors.is_empty() {
                eprintln!("{} error rows present in {}", errors.len(), records.display());
            }
            Ok(errors.is_empty())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
