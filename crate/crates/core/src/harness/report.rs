//! CSV emission and per-point summary statistics.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::harness::{Row, RowStatus, SweepResult};
use crate::{Error, Result};

pub const HEADER: [&str; 9] = [
    "scheme",
    "p_max_dbm",
    "trial",
    "seed",
    "throughput",
    "iterations",
    "converged",
    "violations",
    "wall_ms",
];

/// 17 significant digits; round-trips every finite `f64`.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv_to<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    if result.is_empty() {
        return Err(Error::domain("no rows to write"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.scheme.clone(),
            fmt_f64(r.p_max_dbm),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f64(r.throughput),
            r.iterations.to_string(),
            r.status.as_str().to_string(),
            r.violations.to_string(),
            fmt_f64(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(result, std::io::BufWriter::new(file))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Config {
        line,
        message: format!("`{}`: cannot parse '{raw}'", HEADER[i]),
    })
}

pub fn read_csv_from<R: Read>(input: R) -> Result<SweepResult> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::Config {
            line: 1,
            message: format!("unexpected header, expected {}", HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let status = rec
            .get(6)
            .and_then(RowStatus::parse)
            .ok_or_else(|| Error::Config {
                line,
                message: "`converged`: expected true, false or error".into(),
            })?;
        rows.push(Row {
            scheme: rec.get(0).unwrap_or("").to_string(),
            p_max_dbm: field(&rec, 1, line)?,
            trial: field(&rec, 2, line)?,
            seed: field(&rec, 3, line)?,
            throughput: field(&rec, 4, line)?,
            iterations: field(&rec, 5, line)?,
            status,
            violations: field(&rec, 7, line)?,
            wall_ms: field(&rec, 8, line)?,
        });
    }
    Ok(SweepResult { rows })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<SweepResult> {
    read_csv_from(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub p_max_dbm: f64,
    /// Rows that produced a throughput.
    pub n: usize,
    pub failures: usize,
    pub mean: f64,
    /// Standard error of the mean, sample (n - 1) variance; 0 when n = 1.
    pub stderr: f64,
}

/// Mean and standard error per `(scheme, p_max)`, sorted by scheme then
/// `p_max`. Logs a warning where a scheme's mean drops as `p_max` grows.
pub fn summarize(result: &SweepResult) -> Result<Vec<SummaryRow>> {
    if result.is_empty() {
        return Err(Error::domain("no rows to summarize"));
    }
    // Keyed on the bit pattern so the map orders by value for finite
    // non-negative powers and stays total for the rest.
    let mut groups: BTreeMap<(String, i64), (f64, Vec<f64>, usize)> = BTreeMap::new();
    for r in &result.rows {
        let key = (r.scheme.clone(), ordered_key(r.p_max_dbm));
        let entry = groups.entry(key).or_insert((r.p_max_dbm, Vec::new(), 0));
        if r.status == RowStatus::Error || !r.throughput.is_finite() {
            entry.2 += 1;
        } else {
            entry.1.push(r.throughput);
        }
    }
    let table: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((scheme, _), (p, xs, failures))| {
            let n = xs.len();
            let mean = if n == 0 {
                f64::NAN
            } else {
                xs.iter().sum::<f64>() / n as f64
            };
            let stderr = if n < 2 {
                0.0
            } else {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            };
            SummaryRow {
                scheme,
                p_max_dbm: p,
                n,
                failures,
                mean,
                stderr,
            }
        })
        .collect();
    for pair in table.windows(2) {
        if pair[0].scheme == pair[1].scheme && pair[1].mean < pair[0].mean {
            log::warn!(
                "{}: mean throughput drops from {:.4} at {} dBm to {:.4} at {} dBm",
                pair[0].scheme,
                pair[0].mean,
                pair[0].p_max_dbm,
                pair[1].mean,
                pair[1].p_max_dbm
            );
        }
    }
    Ok(table)
}

/// Total order on `f64` compatible with numeric order.
fn ordered_key(x: f64) -> i64 {
    let bits = x.to_bits() as i64;
    bits ^ (((bits >> 63) as u64) >> 1) as i64
}
