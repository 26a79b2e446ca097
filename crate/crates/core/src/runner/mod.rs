//! Config-driven experiments: each run writes versioned CSV/JSON outputs
//! and a manifest, and `summarize` turns a manifest back into a pass/fail
//! table.
//!
//! Jobs are spread over a small thread pool, but every job owns a seed
//! derived from the master seed and its key, and results are collected by
//! job index. Output bytes therefore never depend on the worker count.

mod config;
mod mcmc;
mod oracle;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, ExperimentKind, KernelParams, SweepFamily, SweepSpec, TargetSpec, OUTPUT_ROOT_ENV};

use crate::error::{Error, Result};
use crate::io::schema_line;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "PMCMC_WORKERS";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.json";

/// One acceptance check: passes when `lower ≤ measured ≤ upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub name: String,
    pub measured: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl CriterionRow {
    pub fn new(name: impl Into<String>, measured: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let pass = measured.is_finite()
            && lower.is_none_or(|l| measured >= l)
            && upper.is_none_or(|u| measured <= u);
        Self {
            name: name.into(),
            measured,
            lower,
            upper,
            pass,
        }
    }

    pub fn at_most(name: impl Into<String>, measured: f64, upper: f64) -> Self {
        Self::new(name, measured, None, Some(upper))
    }

    pub fn at_least(name: impl Into<String>, measured: f64, lower: f64) -> Self {
        Self::new(name, measured, Some(lower), None)
    }

    pub fn within(name: impl Into<String>, measured: f64, lower: f64, upper: f64) -> Self {
        Self::new(name, measured, Some(lower), Some(upper))
    }

    pub fn expected(&self) -> String {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("[{l}, {u}]"),
            (Some(l), None) => format!(">= {l}"),
            (None, Some(u)) => format!("<= {u}"),
            (None, None) => "any".into(),
        }
    }
}

/// Contents of `results.json`: the measured criteria plus
/// experiment-specific details.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub kind: ExperimentKind,
    pub criteria: Vec<CriterionRow>,
    pub details: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub key: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub kind: ExperimentKind,
    pub wall_clock_seconds: f64,
    pub seeds: Vec<SeedEntry>,
    pub files: Vec<OutputFile>,
    pub config: ExperimentConfig,
}

/// Collects output files in one directory and stamps each CSV with its
/// schema and the master seed.
pub(crate) struct OutputDir {
    root: PathBuf,
    seed: u64,
    files: Vec<String>,
}

impl OutputDir {
    fn create(root: PathBuf, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            seed,
            files: Vec::new(),
        })
    }

    pub(crate) fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub(crate) fn csv(&mut self, name: &str, schema: &str) -> Result<csv::Writer<BufWriter<File>>> {
        let mut f = BufWriter::new(File::create(self.root.join(name))?);
        writeln!(f, "{}", schema_line(schema, &[("seed", self.seed.to_string())]))?;
        self.files.push(name.to_string());
        Ok(csv::Writer::from_writer(f))
    }

    pub(crate) fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut f = BufWriter::new(File::create(self.root.join(name))?);
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f)?;
        f.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Registers a file written by other means.
    pub(crate) fn register(&mut self, name: &str) {
        self.files.push(name.to_string());
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let digest = Sha256::digest(std::fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Worker count: the config, then `PMCMC_WORKERS`, then the core count.
pub fn worker_count(cfg: &ExperimentConfig) -> usize {
    cfg.workers
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|w| *w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Apply `f` to every item on up to `workers` threads; output order
/// matches input order.
pub fn parallel_map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<U>> = (0..items.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, U)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break out;
                        }
                        out.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (i, u) in done.into_iter().flatten() {
        slots[i] = Some(u);
    }
    slots.into_iter().map(|u| u.expect("every job ran")).collect()
}

/// Execute the experiment and write its outputs plus `manifest.json`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = OutputDir::create(cfg.resolved_output_dir(), cfg.seed)?;
    let workers = worker_count(cfg);
    let (results, seeds) = match cfg.kind {
        ExperimentKind::Rwm | ExperimentKind::Mala | ExperimentKind::Pt => mcmc::run(cfg, workers, &mut out)?,
        ExperimentKind::OracleSweep => oracle::run_sweep(cfg, workers, &mut out)?,
        ExperimentKind::McError => oracle::run_mc_error(cfg, workers, &mut out)?,
        ExperimentKind::ForwardConvergence => oracle::run_forward(cfg, workers, &mut out)?,
    };
    out.json(RESULTS_FILE, &results)?;

    let mut names = out.files.clone();
    names.sort();
    let files = names
        .into_iter()
        .map(|name| {
            let sha256 = sha256_file(&out.path(&name))?;
            Ok(OutputFile { name, sha256 })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: cfg.kind,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        seeds,
        files,
        config: cfg.clone(),
    };
    let mut f = BufWriter::new(File::create(out.path(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    f.flush()?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub rows: Vec<CriterionRow>,
}

impl Summary {
    /// True when no recorded criterion failed.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Plain-text table, one row per criterion.
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(9).max(9);
        if self.rows.is_empty() {
            return format!("{}: no criteria apply\n", self.kind.label());
        }
        let mut s = format!("{:<width$}  {:>14}  {:<22}  status\n", "criterion", "measured", "expected");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<width$}  {:>14.6e}  {:<22}  {}\n",
                r.name,
                r.measured,
                r.expected(),
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Re-evaluate the criteria recorded for the run at `manifest_path`.
///
/// Every listed file must exist; pass flags are recomputed from the
/// measured values and bounds rather than trusted.
pub fn summarize(manifest_path: &Path) -> Result<Summary> {
    let manifest = load_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.files.is_empty() {
        return Err(Error::MissingFile(dir.join(RESULTS_FILE)));
    }
    for f in &manifest.files {
        let p = dir.join(&f.name);
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
    }
    let results_path = dir.join(RESULTS_FILE);
    if !results_path.is_file() {
        return Err(Error::MissingFile(results_path));
    }
    let results: RunResults = serde_json::from_str(&std::fs::read_to_string(&results_path)?)?;
    let rows = results
        .criteria
        .into_iter()
        .map(|r| CriterionRow::new(r.name, r.measured, r.lower, r.upper))
        .collect();
    Ok(Summary {
        kind: results.kind,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u64> = (0..37).collect();
        let one = parallel_map(&items, 1, |x| x * x);
        let four = parallel_map(&items, 4, |x| x * x);
        assert_eq!(one, four);
        assert_eq!(four[36], 36 * 36);
        assert!(parallel_map(&Vec::<u64>::new(), 3, |x| *x).is_empty());
    }

    #[test]
    fn criterion_bounds() {
        assert!(CriterionRow::within("a", 2.0, 1.8, 2.2).pass);
        assert!(!CriterionRow::at_most("b", 0.06, 0.05).pass);
        assert!(!CriterionRow::at_least("c", f64::NAN, 0.0).pass);
        assert_eq!(CriterionRow::at_most("d", 1.0, 2.0).expected(), "<= 2");
    }

    #[test]
    fn missing_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        assert!(matches!(summarize(&p), Err(Error::MissingFile(_))));
        std::fs::write(&p, "").unwrap();
        assert!(matches!(summarize(&p), Err(Error::MissingFile(_))));
    }
}
