//! Per-replicate rows, their summaries and CSV persistence.

use std::path::Path;

use laebvm_core::stats;
use serde::{Deserialize, Serialize};

use crate::RunError;

/// One replicate at one sample size. Columns that do not apply to an
/// experiment are left empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub replicate: u64,
    pub n: usize,
    pub seed: u64,
    pub delta_n: Option<f64>,
    pub gamma: Option<f64>,
    pub tv: Option<f64>,
    pub theta_hat: Option<f64>,
    pub theta_tilde: Option<f64>,
    pub posterior_mean: Option<f64>,
    pub posterior_median: Option<f64>,
    pub remainder_minus: Option<f64>,
    pub remainder_plus: Option<f64>,
    /// `n (theta_hat - theta0)`.
    pub scaled_err_mle: Option<f64>,
    /// `n (theta_tilde - theta0)`.
    pub scaled_err_debiased: Option<f64>,
    pub stat_a: Option<f64>,
    pub stat_b: Option<f64>,
    pub stat_c: Option<f64>,
}

/// Numeric columns in file order.
pub const FIELDS: [&str; 14] = [
    "delta_n",
    "gamma",
    "tv",
    "theta_hat",
    "theta_tilde",
    "posterior_mean",
    "posterior_median",
    "remainder_minus",
    "remainder_plus",
    "scaled_err_mle",
    "scaled_err_debiased",
    "stat_a",
    "stat_b",
    "stat_c",
];

impl Row {
    pub fn new(replicate: u64, n: usize, seed: u64) -> Self {
        Self {
            replicate,
            n,
            seed,
            ..Self::default()
        }
    }

    pub fn field(&self, index: usize) -> Option<f64> {
        let v = match index {
            0 => self.delta_n,
            1 => self.gamma,
            2 => self.tv,
            3 => self.theta_hat,
            4 => self.theta_tilde,
            5 => self.posterior_mean,
            6 => self.posterior_median,
            7 => self.remainder_minus,
            8 => self.remainder_plus,
            9 => self.scaled_err_mle,
            10 => self.scaled_err_debiased,
            11 => self.stat_a,
            12 => self.stat_b,
            13 => self.stat_c,
            _ => None,
        };
        v.filter(|x| x.is_finite())
    }

    pub fn key(&self) -> (usize, u64) {
        (self.n, self.replicate)
    }
}

/// Replaces non-finite values by `None`.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub field: String,
    pub count: usize,
    pub mean: f64,
    pub se: f64,
    pub median: f64,
    pub mean_sq: f64,
    pub se_sq: f64,
}

/// Per-`n` statistics of every non-empty column. Rows are sorted first, so
/// the result depends only on the set of rows.
pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&Row> = rows.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut ns: Vec<usize> = sorted.iter().map(|r| r.n).collect();
    ns.dedup();
    let mut out = Vec::new();
    for n in ns {
        let group: Vec<&&Row> = sorted.iter().filter(|r| r.n == n).collect();
        for (i, name) in FIELDS.iter().enumerate() {
            let xs: Vec<f64> = group.iter().filter_map(|r| r.field(i)).collect();
            if xs.is_empty() {
                continue;
            }
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            out.push(SummaryRow {
                n,
                field: (*name).to_string(),
                count: xs.len(),
                mean: stats::mean(&xs),
                se: stats::std_error(&xs),
                median: stats::median(&xs),
                mean_sq: stats::mean(&sq),
                se_sq: stats::std_error(&sq),
            });
        }
    }
    out
}

pub fn lookup<'a>(summary: &'a [SummaryRow], n: usize, field: &str) -> Option<&'a SummaryRow> {
    summary.iter().find(|s| s.n == n && s.field == field)
}

fn io_err(path: &Path, e: csv::Error) -> RunError {
    RunError::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_all<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for item in items {
        w.serialize(item).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

pub fn write_rows(path: &Path, rows: &[Row]) -> Result<(), RunError> {
    write_all(path, rows)
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<(), RunError> {
    write_all(path, summary)
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| io_err(path, e))).collect()
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| io_err(path, e))).collect()
}
