//! Orchestration: journal-backed resumable execution of all replicates.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::experiments::{self, Context};
use crate::rows::{self, Row, SummaryRow};
use crate::{export, plot, RunError};

/// Completed replicates, one JSON row per line.
pub const JOURNAL: &str = "progress.jsonl";
/// Config hash the journal belongs to.
pub const JOURNAL_META: &str = "progress.meta";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; all available cores when `None`.
    pub threads: Option<usize>,
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub rows: Vec<Row>,
    pub summary: Vec<SummaryRow>,
    pub report: Value,
    /// Replicates computed in this invocation (the rest came from the journal).
    pub computed: usize,
    pub output_dir: PathBuf,
}

fn read_journal(path: &Path) -> Result<Vec<Row>, RunError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(RunError::io(path, e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| RunError::io(path, e))?;
        // a torn final line from an interrupted run is dropped
        if let Ok(row) = serde_json::from_str::<Row>(&line) {
            out.push(row);
        }
    }
    Ok(out)
}

fn write_json(path: &Path, value: &Value) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| RunError::io(path, e))
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, RunError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    b.build().map_err(|e| RunError::Model(format!("thread pool: {e}")))
}

/// Runs every (n, replicate) job not already in the journal and writes
/// `rows.csv`, `summary.csv`, `report.json` and `plot.py`.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult, RunError> {
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| RunError::io(&out, e))?;
    let hash = cfg.hash();
    let journal_path = out.join(JOURNAL);
    let meta_path = out.join(JOURNAL_META);

    let mut done: Vec<Row> = Vec::new();
    if opts.resume {
        match fs::read_to_string(&meta_path) {
            Ok(stored) if stored.trim() == hash => done = read_journal(&journal_path)?,
            Ok(stored) => {
                return Err(RunError::JournalMismatch {
                    stored: stored.trim().to_string(),
                    current: hash,
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(RunError::io(&meta_path, e)),
        }
    }
    let valid: HashSet<(usize, u64)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..cfg.replicates as u64).map(move |r| (n, r)))
        .collect();
    done.retain(|r| valid.contains(&r.key()));
    done.sort_by_key(|r| r.key());
    done.dedup_by_key(|r| r.key());
    let finished: HashSet<(usize, u64)> = done.iter().map(|r| r.key()).collect();

    // rewrite the journal with the surviving rows, then append as jobs finish
    fs::write(&meta_path, format!("{hash}\n")).map_err(|e| RunError::io(&meta_path, e))?;
    let mut text = String::new();
    for row in &done {
        text.push_str(&serde_json::to_string(row).expect("row serializes"));
        text.push('\n');
    }
    fs::write(&journal_path, text).map_err(|e| RunError::io(&journal_path, e))?;

    let jobs: Vec<(usize, u64)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..cfg.replicates as u64).map(move |r| (n, r)))
        .filter(|k| !finished.contains(k))
        .collect();

    let pool = pool(opts.threads)?;
    let (ctx, fresh) = pool.install(|| -> Result<(Context, Vec<Row>), RunError> {
        let ctx = experiments::prepare(cfg)?;
        let journal = Mutex::new(
            OpenOptions::new()
                .append(true)
                .open(&journal_path)
                .map_err(|e| RunError::io(&journal_path, e))?,
        );
        let fresh = jobs
            .par_iter()
            .map(|&(n, r)| {
                let row = experiments::replicate(&ctx, n, r)?;
                let line = serde_json::to_string(&row).expect("row serializes") + "\n";
                journal
                    .lock()
                    .expect("journal lock")
                    .write_all(line.as_bytes())
                    .map_err(|e| RunError::io(&journal_path, e))?;
                Ok(row)
            })
            .collect::<Result<Vec<Row>, RunError>>()?;
        Ok((ctx, fresh))
    })?;
    let computed = fresh.len();
    let mut all = done;
    all.extend(fresh);
    all.sort_by_key(|r| r.key());

    // completed: leave the journal in canonical order
    let mut text = String::new();
    for row in &all {
        text.push_str(&serde_json::to_string(row).expect("row serializes"));
        text.push('\n');
    }
    fs::write(&journal_path, text).map_err(|e| RunError::io(&journal_path, e))?;

    let summary = rows::summarize(&all);
    rows::write_rows(&out.join("rows.csv"), &all)?;
    rows::write_summary(&out.join("summary.csv"), &summary)?;
    let details = experiments::details(&ctx, &all, &summary)?;
    let report = build_report(cfg, &hash, all.len(), details);
    write_json(&out.join("report.json"), &report)?;
    let plot_path = out.join("plot.py");
    fs::write(&plot_path, plot::script(cfg.experiment)).map_err(|e| RunError::io(&plot_path, e))?;
    write_posterior_examples(&ctx, &out)?;

    Ok(ExperimentResult {
        config_hash: hash,
        rows: all,
        summary,
        report,
        computed,
        output_dir: out,
    })
}

/// Posterior of replicate 0 at every n, for plotting.
fn write_posterior_examples(ctx: &Context, out: &Path) -> Result<(), RunError> {
    let cfg = &ctx.cfg;
    if !matches!(
        cfg.experiment,
        Experiment::BvmParametric | Experiment::BvmShift | Experiment::BvmScale
    ) {
        return Ok(());
    }
    for &n in &cfg.n_list {
        let seed = experiments::replicate_seed(cfg.master_seed, cfg.experiment, n, 0);
        let data = laebvm_core::models::sample(&ctx.spec, ctx.spec.theta0(), None, n, seed)
            .map_err(|e| RunError::Model(e.to_string()))?;
        let post = laebvm_core::posterior::marginal_posterior(&ctx.spec, &data, &cfg.prior.theta, &ctx.draws, &cfg.grid)
            .map_err(|e| RunError::Model(e.to_string()))?;
        export::write_posterior_csv(&out.join(format!("posterior_n{n}.csv")), &post)?;
    }
    Ok(())
}

fn build_report(cfg: &ExperimentConfig, hash: &str, row_count: usize, details: Value) -> Value {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "experiment": cfg.experiment.name(),
        "config_hash": hash,
        "config": cfg,
        "row_count": row_count,
        "columns": rows::FIELDS,
        "stat_columns": experiments::stat_columns(cfg.experiment),
        "seeding": "replicate stream = derive_seed(master_seed, [fnv1a(experiment), n, replicate]); prior draw i = score prior seeded by derive_seed(master_seed, [fnv1a(\"nuisance\")]), stream [0x5C0E5C0E, i]",
        "tolerances": {
            "quadrature_abs": 1e-13,
            "quadrature_rel": 1e-12,
            "density_log_tol": laebvm_core::nuisance::LOG_TOL,
            "kn_grid_nodes": laebvm_core::metrics::KN_GRID_NODES,
        },
        "details": details,
        "versions": {
            "laebvm": env!("CARGO_PKG_VERSION"),
        },
        "metadata": {
            "unix_time": timestamp,
        },
    })
}

/// Re-derives `summary.csv` from `rows.csv`; returns the summary and whether
/// the file on disk already matched.
pub fn report(out: &Path) -> Result<(Vec<SummaryRow>, bool), RunError> {
    let all = rows::read_rows(&out.join("rows.csv"))?;
    let summary = rows::summarize(&all);
    let path = out.join("summary.csv");
    let matched = rows::read_summary(&path).map(|s| s == summary).unwrap_or(false);
    rows::write_summary(&path, &summary)?;
    Ok((summary, matched))
}
