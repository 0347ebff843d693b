use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{run_scenario_with_log, RunReport, ScenarioConfig};
use crate::cbo::OptimizerHistory;
use crate::cpg::OPTIMIZED_NAMES;
use crate::error::{Error, Result};
use crate::objective::objective_value;

/// Format tag written into every run log.
pub const LOG_FORMAT: &str = "gaitopt-log/1";

/// Everything needed to audit and re-execute a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub format: String,
    pub config: ScenarioConfig,
    pub report: RunReport,
    pub history: OptimizerHistory,
}

impl RunLog {
    pub fn new(config: ScenarioConfig, report: RunReport, history: OptimizerHistory) -> Self {
        Self {
            format: LOG_FORMAT.into(),
            config,
            report,
            history,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn write_log(path: impl AsRef<Path>, log: &RunLog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, log)?;
    w.flush()?;
    Ok(())
}

pub fn read_log(path: impl AsRef<Path>) -> Result<RunLog> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(LOG_FORMAT) => Ok(serde_json::from_value(value)?),
        Some(other) => Err(Error::LogFormat(other.into())),
        None => Err(Error::LogFormat("<missing>".into())),
    }
}

/// One point of the learning curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub trial: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub cot: f64,
    pub mean_velocity: f64,
    pub target_velocity: f64,
    pub c_load: f64,
    pub c_slope: f64,
    pub beta: f64,
}

pub fn plot_series(report: &RunReport) -> Vec<PlotRow> {
    let mut best = f64::NEG_INFINITY;
    report
        .rows
        .iter()
        .map(|r| {
            best = best.max(r.objective);
            PlotRow {
                trial: r.trial,
                objective: r.objective,
                best_objective: best,
                cot: r.cot,
                mean_velocity: r.mean_velocity,
                target_velocity: r.target_velocity,
                c_load: r.context.load,
                c_slope: r.context.slope,
                beta: r.beta,
            }
        })
        .collect()
}

fn trial_table_header() -> Vec<String> {
    let mut h = vec!["trial".to_string()];
    h.extend(OPTIMIZED_NAMES.iter().map(|s| s.to_string()));
    h.extend(
        [
            "c_load",
            "c_slope",
            "mean_vx",
            "cot",
            "objective",
            "beta",
            "aborted",
        ]
        .map(String::from),
    );
    h
}

/// Writes `trials.csv`, `plot_series.csv` and, with a log, `run_log.json`
/// into `out_dir`. Returns the written paths.
pub fn export_results(
    report: &RunReport,
    log: Option<&RunLog>,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("trials.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(trial_table_header())?;
    for r in &report.rows {
        let mut rec = vec![r.trial.to_string()];
        rec.extend(r.params.iter().map(|v| v.to_string()));
        rec.extend(
            [
                r.context.load,
                r.context.slope,
                r.mean_velocity,
                r.cot,
                r.objective,
                r.beta,
            ]
            .map(|v| v.to_string()),
        );
        rec.push(r.aborted.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("plot_series.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&path)?;
    w.write_record([
        "trial",
        "objective",
        "best_objective",
        "cot",
        "mean_velocity",
        "target_velocity",
        "c_load",
        "c_slope",
        "beta",
    ])?;
    for row in plot_series(report) {
        w.serialize(row)?;
    }
    w.flush()?;
    written.push(path);

    if let Some(log) = log {
        let path = dir.join("run_log.json");
        write_log(&path, log)?;
        written.push(path);
    }
    Ok(written)
}

/// Result of re-executing a logged run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    /// The re-executed log serializes to the same bytes as the stored one.
    pub identical: bool,
    /// First trial whose report row differs, if any.
    pub first_mismatch: Option<usize>,
    /// Every stored objective equals a fresh evaluation of its trace.
    pub objectives_consistent: bool,
    pub replayed: RunLog,
}

/// Re-executes the logged configuration and compares the result bitwise.
pub fn replay(log: &RunLog) -> Result<ReplayOutcome> {
    if log.format != LOG_FORMAT {
        return Err(Error::LogFormat(log.format.clone()));
    }
    let objectives_consistent = log.history.records.iter().all(|r| {
        objective_value(r, log.history.target_velocity, &log.config.objective).to_bits()
            == r.objective.to_bits()
    });
    let replayed = run_scenario_with_log(&log.config)?;
    let identical = replayed.to_json()? == log.to_json()?;
    let first_mismatch = log
        .report
        .rows
        .iter()
        .zip(&replayed.report.rows)
        .position(|(a, b)| a != b)
        .or_else(|| {
            (log.report.rows.len() != replayed.report.rows.len())
                .then(|| log.report.rows.len().min(replayed.report.rows.len()))
        });
    Ok(ReplayOutcome {
        identical,
        first_mismatch,
        objectives_consistent,
        replayed,
    })
}
