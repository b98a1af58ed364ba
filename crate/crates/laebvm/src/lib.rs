//! Experiment harness for `laebvm-core`: configuration files, deterministic
//! parallel replication, resumable runs and CSV/JSON outputs.

use std::path::{Path, PathBuf};

pub mod config;
pub mod experiments;
pub mod export;
pub mod plot;
pub mod rows;
pub mod run;

pub use config::{ConfigError, Experiment, ExperimentConfig, Overrides};
pub use rows::{Row, SummaryRow};
pub use run::{report, run, ExperimentResult, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("JSON error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Model(String),
    #[error("journal belongs to config {stored}, not {current}; rerun without --resume")]
    JournalMismatch { stored: String, current: String },
}

impl RunError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
