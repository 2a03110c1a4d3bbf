//! Cell execution: one result CSV per (method, seed), a JSON manifest with
//! full provenance, checksum-based resume, and a bounded worker pool.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use beliefbo::benchmarks::{noisy_objective, simple_regret};
use beliefbo::engine::run;
use beliefbo::rng;

use crate::config::{ExperimentConfig, MethodConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellEntry {
    pub method: String,
    pub seed: u64,
    pub file: String,
    pub sha256: String,
    pub rows: usize,
    pub flags: Vec<String>,
    pub halted: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellEntry>,
}

pub struct CellOutcome {
    pub entry: CellEntry,
    pub skipped: bool,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn cell_filename(method: &str, seed: u64) -> String {
    format!("{method}-seed{seed}.csv")
}

/// CSV header for a benchmark of dimension `dim`.
pub fn csv_header(dim: usize) -> Vec<String> {
    let mut cols = vec![
        "method".to_string(),
        "benchmark".to_string(),
        "seed".to_string(),
        "iteration".to_string(),
    ];
    for i in 0..dim {
        cols.push(format!("x{i}"));
    }
    cols.extend(
        ["y", "incumbent", "regret", "seconds"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

fn run_cell(
    cfg: &ExperimentConfig,
    method: &MethodConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<CellEntry> {
    let spec = cfg.spec();
    let bo = cfg.bo_config(method, seed)?;
    let mut objective = noisy_objective(spec.clone(), rng::derive_seed(seed, &[rng::tag::NOISE]));
    let record = run(&bo, &mut objective, None)
        .with_context(|| format!("cell {}-{seed} failed", method.name))?;

    let regret = simple_regret(&spec, &record.queries())?;
    let file = cell_filename(&method.name, seed);
    let path = out_dir.join(&file);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(csv_header(spec.dim))?;
    for (i, it) in record.iterations.iter().enumerate() {
        let mut row = vec![
            method.name.clone(),
            cfg.benchmark.clone(),
            seed.to_string(),
            it.iteration.to_string(),
        ];
        for v in it.x.iter() {
            row.push(format!("{v}"));
        }
        row.push(format!("{}", it.y));
        row.push(format!("{}", it.incumbent));
        row.push(format!("{}", regret[i]));
        row.push(format!("{}", it.seconds));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut flags = BTreeSet::new();
    for it in &record.iterations {
        for f in &it.flags {
            flags.insert(f.clone());
        }
    }
    Ok(CellEntry {
        method: method.name.clone(),
        seed,
        file: file.clone(),
        sha256: sha256_file(&path)?,
        rows: record.iterations.len(),
        flags: flags.into_iter().collect(),
        halted: record.halted,
    })
}

/// Resolve the output directory: `--out` wins, then the config value, both
/// prefixed by `BELIEFBO_OUT` when set and the path is relative.
pub fn resolve_out_dir(cfg: &ExperimentConfig, cli_out: Option<&str>) -> PathBuf {
    let chosen = cli_out
        .map(str::to_string)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| "results".to_string());
    let path = PathBuf::from(&chosen);
    if path.is_relative() {
        if let Ok(root) = std::env::var("BELIEFBO_OUT") {
            if !root.is_empty() {
                return PathBuf::from(root).join(path);
            }
        }
    }
    path
}

/// Execute all (method, seed) cells. Cells whose result file matches the
/// manifest checksum are skipped, making interrupted invocations resumable.
pub fn cmd_run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
    dry_run: bool,
) -> Result<Vec<CellOutcome>> {
    let cells: Vec<(usize, u64)> = (0..cfg.methods.len())
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();

    if dry_run {
        println!(
            "dry run: {} cells ({} methods x {} seeds) on {}",
            cells.len(),
            cfg.methods.len(),
            cfg.seeds.len(),
            cfg.benchmark
        );
        for (m, s) in &cells {
            println!("  {} seed {s} -> {}", cfg.methods[*m].name, cell_filename(&cfg.methods[*m].name, *s));
        }
        return Ok(Vec::new());
    }

    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    let manifest_path = out_dir.join("manifest.json");
    let previous: Option<Manifest> = fs::read_to_string(&manifest_path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());

    let can_skip = |method: &str, seed: u64| -> Option<CellEntry> {
        let prev = previous.as_ref()?;
        let entry = prev
            .cells
            .iter()
            .find(|c| c.method == method && c.seed == seed)?;
        if entry.rows != cfg.evaluations || entry.halted.is_some() {
            return None;
        }
        let path = out_dir.join(&entry.file);
        let sha = sha256_file(&path).ok()?;
        (sha == entry.sha256).then(|| entry.clone())
    };

    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<CellOutcome>> = Mutex::new(Vec::new());
    let worker_count = workers.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..worker_count {
            handles.push(scope.spawn(|| -> Result<()> {
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= cells.len() {
                        return Ok(());
                    }
                    let (mi, seed) = cells[i];
                    let method = &cfg.methods[mi];
                    let outcome = match can_skip(&method.name, seed) {
                        Some(entry) => {
                            println!("cell {} seed {seed}: up to date, skipping", method.name);
                            CellOutcome {
                                entry,
                                skipped: true,
                            }
                        }
                        None => {
                            println!("cell {} seed {seed}: running", method.name);
                            let entry = run_cell(cfg, method, seed, out_dir)?;
                            CellOutcome {
                                entry,
                                skipped: false,
                            }
                        }
                    };
                    outcomes.lock().unwrap().push(outcome);
                }
            }));
        }
        for h in handles {
            match h.join() {
                Ok(res) => res?,
                Err(p) => std::panic::resume_unwind(p),
            }
        }
        Ok(())
    })?;

    let mut outcomes = outcomes.into_inner().unwrap();
    outcomes.sort_by(|a, b| {
        (&a.entry.method, a.entry.seed).cmp(&(&b.entry.method, b.entry.seed))
    });

    let manifest = Manifest {
        version: VERSION.to_string(),
        config: cfg.clone(),
        cells: outcomes.iter().map(|o| o.entry.clone()).collect(),
    };
    let mut f = fs::File::create(&manifest_path)?;
    f.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    f.write_all(b"\n")?;

    if outcomes.iter().any(|o| o.entry.halted.is_some()) {
        bail!("one or more cells halted on objective failure; see manifest");
    }
    Ok(outcomes)
}
