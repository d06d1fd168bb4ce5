//! Row types and their CSV encodings.
//!
//! `records.csv` columns: `seed,method,step,x0..x{d-1},f,best_so_far,regret,status`.
//! A failed run contributes its completed steps plus one row whose status is
//! `error: <message>` and whose numeric columns are empty. Floats are written
//! in Rust's shortest round-trip form, so equal values give equal bytes.

use std::io::{Read, Write};

use fbo_core::bo_loop::Method;
use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub seed: u64,
    pub method: Method,
    pub step: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub best_so_far: f64,
    pub regret: f64,
    /// Wall-clock seconds for the step. Kept out of `records.csv`.
    pub seconds: f64,
}

/// Marker for a run that aborted at `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub seed: u64,
    pub method: Method,
    pub step: usize,
    pub message: String,
}

fn key(seed: u64, method: Method, step: usize) -> (u64, Method, usize) {
    (seed, method, step)
}

pub fn sort_records(records: &mut [RegretRecord]) {
    records.sort_by_key(|a| key(a.seed, a.method, a.step));
}

pub fn write_records<W: Write>(out: W, records: &[RegretRecord], errors: &[RunError]) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.x.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["seed".to_string(), "method".into(), "step".into()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend(["f", "best_so_far", "regret", "status"].map(String::from));
    w.write_record(&header)?;

    enum Row<'a> {
        Ok(&'a RegretRecord),
        Err(&'a RunError),
    }
    let mut rows: Vec<Row> = records.iter().map(Row::Ok).chain(errors.iter().map(Row::Err)).collect();
    let row_key = |r: &Row| match r {
        Row::Ok(r) => (key(r.seed, r.method, r.step), 0),
        Row::Err(e) => (key(e.seed, e.method, e.step), 1),
    };
    rows.sort_by_key(|a| row_key(a));

    for row in rows {
        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        match row {
            Row::Ok(r) => {
                if r.x.len() != dim {
                    return Err(BenchError::Config("records with mixed dimensions".into()));
                }
                fields.extend([r.seed.to_string(), r.method.to_string(), r.step.to_string()]);
                fields.extend(r.x.iter().map(|v| v.to_string()));
                fields.extend([r.f.to_string(), r.best_so_far.to_string(), r.regret.to_string(), "ok".into()]);
            }
            Row::Err(e) => {
                fields.extend([e.seed.to_string(), e.method.to_string(), e.step.to_string()]);
                fields.extend(std::iter::repeat_n(String::new(), dim + 3));
                fields.push(format!("error: {}", e.message));
            }
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse `records.csv` back into successful records and error markers.
/// `seconds` is not stored in the file and reads back as `NaN`.
pub fn read_records<R: Read>(input: R) -> Result<(Vec<RegretRecord>, Vec<RunError>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::Config(format!("records file is missing column `{name}`")))
    };
    let (seed_c, method_c, step_c) = (col("seed")?, col("method")?, col("step")?);
    let (f_c, best_c, regret_c, status_c) = (col("f")?, col("best_so_far")?, col("regret")?, col("status")?);
    let x_cols: Vec<usize> = (0..).map_while(|i| headers.iter().position(|h| h == format!("x{i}"))).collect();

    let bad = |what: &str, line: usize| BenchError::Config(format!("records line {line}: bad {what}"));
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let seed = row[seed_c].parse().map_err(|_| bad("seed", line))?;
        let method: Method = row[method_c].parse().map_err(|_| bad("method", line))?;
        let step = row[step_c].parse().map_err(|_| bad("step", line))?;
        let status = &row[status_c];
        if let Some(message) = status.strip_prefix("error: ") {
            errors.push(RunError { seed, method, step, message: message.to_string() });
            continue;
        }
        let num = |c: usize, what: &str| row[c].parse::<f64>().map_err(|_| bad(what, line));
        records.push(RegretRecord {
            seed,
            method,
            step,
            x: x_cols.iter().map(|&c| num(c, "x")).collect::<Result<_>>()?,
            f: num(f_c, "f")?,
            best_so_far: num(best_c, "best_so_far")?,
            regret: num(regret_c, "regret")?,
            seconds: f64::NAN,
        });
    }
    Ok((records, errors))
}

/// `timings.csv`: `seed,method,step,seconds`.
pub fn write_timings<W: Write>(out: W, records: &[RegretRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "method", "step", "seconds"])?;
    for r in records {
        w.write_record([r.seed.to_string(), r.method.to_string(), r.step.to_string(), r.seconds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(seed: u64, method: Method, step: usize, v: f64) -> RegretRecord {
        RegretRecord { seed, method, step, x: vec![v, -v / 3.0], f: v, best_so_far: v, regret: v, seconds: 0.5 }
    }

    #[test]
    fn round_trip_through_csv() {
        let records = vec![rec(1, Method::Fbo, 0, 0.1), rec(0, Method::Mlii, 1, 1.0 / 3.0)];
        let errors = vec![RunError { seed: 1, method: Method::Fbo, step: 1, message: "boom, with comma".into() }];
        let mut buf = Vec::new();
        write_records(&mut buf, &records, &errors).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("seed,method,step,x0,x1,f,best_so_far,regret,status\n0,mlii,1,"));
        let (back, errs) = read_records(buf.as_slice()).unwrap();
        assert_eq!(errs, errors);
        let mut sorted = records.clone();
        sort_records(&mut sorted);
        for (a, b) in back.iter().zip(&sorted) {
            assert_eq!((a.seed, a.method, a.step, &a.x, a.f), (b.seed, b.method, b.step, &b.x, b.f));
        }
    }
}
