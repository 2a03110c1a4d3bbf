//! Aggregation of per-cell result files into per-iteration regret quantiles.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub method: String,
    pub benchmark: String,
    pub iteration: usize,
    pub n_seeds: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Read every `*.csv` result file in the directory and aggregate per-method,
/// per-iteration regret quantiles across seeds.
pub fn aggregate(dir: &Path) -> Result<Vec<AggregateRow>> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no result files in {}", dir.display());
    }

    // (method, iteration) -> regrets across seeds
    let mut cells: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    let mut benchmark: Option<String> = None;
    for path in &files {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let idx = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("{}: missing column {name}", path.display()))
        };
        let (im, ib, ii, ir) = (idx("method")?, idx("benchmark")?, idx("iteration")?, idx("regret")?);
        for row in rdr.records() {
            let row = row?;
            let bench = row[ib].to_string();
            match &benchmark {
                None => benchmark = Some(bench),
                Some(b) if *b != bench => {
                    bail!(
                        "mixed benchmarks in one report: {b} vs {bench} ({})",
                        path.display()
                    )
                }
                _ => {}
            }
            let iteration: usize = row[ii].parse()?;
            let regret: f64 = row[ir].parse()?;
            cells
                .entry((row[im].to_string(), iteration))
                .or_default()
                .push(regret);
        }
    }

    let benchmark = benchmark.expect("at least one row");
    let mut out = Vec::new();
    for ((method, iteration), mut regrets) in cells {
        regrets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(AggregateRow {
            method,
            benchmark: benchmark.clone(),
            iteration,
            n_seeds: regrets.len(),
            median: quantile(&regrets, 0.5),
            q1: quantile(&regrets, 0.25),
            q3: quantile(&regrets, 0.75),
        });
    }
    Ok(out)
}

pub fn write_aggregate(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "benchmark",
        "iteration",
        "n_seeds",
        "regret_median",
        "regret_q1",
        "regret_q3",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.benchmark.clone(),
            r.iteration.to_string(),
            r.n_seeds.to_string(),
            format!("{}", r.median),
            format!("{}", r.q1),
            format!("{}", r.q3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(AggregateRow {
            method: rec[0].to_string(),
            benchmark: rec[1].to_string(),
            iteration: rec[2].parse()?,
            n_seeds: rec[3].parse()?,
            median: rec[4].parse()?,
            q1: rec[5].parse()?,
            q3: rec[6].parse()?,
        });
    }
    if rows.is_empty() {
        bail!("aggregate file {} has no rows", path.display());
    }
    Ok(rows)
}
