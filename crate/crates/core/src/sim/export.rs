//! CSV trajectory logs and TOML reports.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back gives bit-identical values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::bench::BenchReport;
use super::run::{RunOutcome, TickRecord, TrajectoryLog, LOG_COLUMNS};
use super::scenario::Scenario;
use crate::{Error, Result};

pub fn write_log_csv<W: Write>(w: W, records: &[TickRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(LOG_COLUMNS).map_err(csv_err)?;
    for r in records {
        out.write_record(r.to_row().iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log_csv<R: Read>(r: R) -> Result<Vec<TickRecord>> {
    let mut input = csv::Reader::from_reader(r);
    let header = input.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(LOG_COLUMNS.iter().copied()) {
        return Err(Error::Format("log header does not match the expected columns".into()));
    }
    let mut records = Vec::new();
    for (i, row) in input.records().enumerate() {
        let row = row.map_err(|e| Error::Format(e.to_string()))?;
        let values = row
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?;
        records.push(TickRecord::from_row(&values)?);
    }
    Ok(records)
}

pub fn save_log_csv(path: &Path, records: &[TickRecord]) -> Result<()> {
    write_log_csv(File::create(path)?, records)
}

pub fn load_log_csv(path: &Path) -> Result<Vec<TickRecord>> {
    read_log_csv(File::open(path)?)
}

/// Final metrics of one run, written next to its CSV log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub seed: u64,
    pub outcome: String,
    pub outcome_time: Option<f64>,
    pub ticks: usize,
    pub terminal_position_error: f64,
    pub terminal_attitude_error_deg: f64,
    pub peak_chaser_current: f64,
    pub saturated_ticks: usize,
    pub extrapolated_ticks: usize,
    pub faulted_ticks: usize,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, log: &TrajectoryLog) -> Self {
        let (outcome, outcome_time) = match &log.outcome {
            RunOutcome::Completed => ("completed".to_string(), None),
            RunOutcome::Docked { t, .. } => ("docked".to_string(), Some(*t)),
            RunOutcome::Collision { t, .. } => ("collision".to_string(), Some(*t)),
            RunOutcome::Fault { t, message } => (format!("fault: {message}"), Some(*t)),
        };
        let count = |f: fn(&TickRecord) -> bool| log.records.iter().filter(|r| f(r)).count();
        RunSummary {
            model: scenario.run.model.to_string(),
            seed: scenario.run.seed,
            outcome,
            outcome_time,
            ticks: log.records.len(),
            terminal_position_error: log.terminal_position_error(),
            terminal_attitude_error_deg: log.terminal_attitude_error().to_degrees(),
            peak_chaser_current: log.peak_chaser_current(),
            saturated_ticks: count(|r| r.saturated),
            extrapolated_ticks: count(|r| r.extrapolated),
            faulted_ticks: count(|r| r.fault),
        }
    }
}

pub fn to_toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Format(e.to_string()))
}

pub fn from_toml_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(std::fs::write(path, to_toml_string(value)?)?)
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_toml_str(&std::fs::read_to_string(path)?)
}

pub fn save_bench_report(path: &Path, report: &BenchReport) -> Result<()> {
    save_toml(path, report)
}

pub fn load_bench_report(path: &Path) -> Result<BenchReport> {
    load_toml(path)
}

/// File name of run `index` of a batch.
pub fn batch_log_name(index: usize, seed: u64) -> String {
    format!("run_{index:03}_seed_{seed}.csv")
}

/// Writes each log and its summary into `dir`, returning the CSV paths.
pub fn write_batch(dir: &Path, runs: &[(Scenario, TrajectoryLog)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(runs.len());
    for (i, (sc, log)) in runs.iter().enumerate() {
        let path = dir.join(batch_log_name(i, sc.run.seed));
        save_log_csv(&path, &log.records)?;
        save_toml(&path.with_extension("toml"), &RunSummary::new(sc, log))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Batch-level table: one summary per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: Vec<RunSummary>,
}
