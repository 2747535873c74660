//! Result files: aggregated CSV, per-trial traces and run metadata.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::ExperimentError;
use crate::experiments::montecarlo::{AggregateRow, TrialResult};
use crate::topology::ScenarioConfig;

pub fn write_results_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceCsvRow<'a> {
    outer: usize,
    stage: &'a str,
    sum_rate: f64,
    accepted: bool,
    violation: f64,
}

pub fn write_trace_csv<W: Write>(result: &TrialResult, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in &result.trace {
        w.serialize(TraceCsvRow {
            outer: r.outer,
            stage: r.stage.as_str(),
            sum_rate: r.sum_rate,
            accepted: r.accepted,
            violation: r.violation,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `trace_<trial>_<scheme>.csv` for every result; with a sweep prefix
/// when several sweep values share the directory.
pub fn write_traces(dir: &Path, prefix: &str, results: &[Vec<TrialResult>]) -> Result<(), ExperimentError> {
    for r in results.iter().flatten() {
        let name = format!("trace_{prefix}{}_{}.csv", r.trial, r.scheme);
        write_trace_csv(r, fs::File::create(dir.join(name))?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub schemes: Vec<String>,
    pub sweep_axis: String,
    pub sweep_values: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    pub git_describe: String,
    pub wall_clock_s: f64,
    pub started_unix_s: u64,
    pub aborted_trials: Vec<String>,
    pub notes: Vec<String>,
}

pub fn default_notes() -> Vec<String> {
    vec![
        "SBS placement is a stand-in: SBSs sit on a fixed ring, evenly spaced in angle.".into(),
        "SBS positions are fixed across trials; only UE positions and channels are redrawn.".into(),
    ]
}

pub fn write_meta(path: &Path, meta: &Meta) -> Result<(), ExperimentError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, meta)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// `git describe --always --dirty`, or `unknown` outside a repository.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}
