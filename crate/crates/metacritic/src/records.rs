//! Result rows, the results CSV and the run manifest.

use std::io::Write;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Column order of every results CSV.
pub const RESULTS_HEADER: [&str; 9] = [
    "experiment",
    "method",
    "condition",
    "arms_or_k",
    "budget",
    "task_id",
    "repeat",
    "metric",
    "value",
];

/// One measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub method: String,
    pub condition: String,
    /// Shots K for regression, arms for bandits, 0 where it does not apply.
    pub arms_or_k: usize,
    /// Meta-test step budget, pulls, or games played.
    pub budget: usize,
    pub task_id: usize,
    pub repeat: usize,
    pub metric: String,
    pub value: f64,
}

impl ResultRecord {
    fn sort_key(&self) -> (&str, usize, usize) {
        (&self.method, self.task_id, self.repeat)
    }
}

/// Stable order used when comparing runs with different job counts.
pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

pub fn write_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::BufWriter::new(file));
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != RESULTS_HEADER {
        return Err(HarnessError::Usage(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Mean and sample standard deviation of the rows matching `pred`.
pub fn summarise<'a>(records: impl IntoIterator<Item = &'a ResultRecord>) -> (f64, f64, usize) {
    let values: Vec<f64> = records.into_iter().map(|r| r.value).collect();
    (crate::stats::mean(&values), crate::stats::std_dev(&values), values.len())
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub seed: u64,
    pub scale: crate::config::Scale,
    pub methods: Vec<String>,
    pub jobs: usize,
    pub git_revision: String,
    pub crate_version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| HarnessError::io(path, e.into()))?;
        writeln!(f).map_err(|e| HarnessError::io(path, e))
    }
}

/// `git rev-parse HEAD` of the working directory, or "unknown".
pub fn git_revision() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_owned())
        .unwrap_or_else(|| "unknown".into())
}
