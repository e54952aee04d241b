//! Report files: `design.csv`, `raw_design.csv`, `trace.csv`,
//! `summary.json` and the effective `config.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use oed_core::algorithms::{AlgoReport, Algorithm, Termination, Timing};
use oed_core::{Criterion, Design};
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    /// `log10 det M` for D and log-D, the criterion value otherwise.
    pub objective: f64,
    pub criterion_value: f64,
    pub iterations: usize,
    pub jacobian_evaluations: u64,
    pub support_points: usize,
    pub termination: Termination,
    /// Seconds.
    pub timing: Timing,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn new(report: &AlgoReport, model: &str) -> Result<Summary, CliError> {
        Ok(Summary {
            model: model.to_string(),
            algorithm: report.algorithm,
            criterion: report.criterion,
            objective: report.reported_objective()?,
            criterion_value: report.objective,
            iterations: report.iterations,
            jacobian_evaluations: report.jacobian_evaluations,
            support_points: report.design.len(),
            termination: report.termination,
            timing: report.timing,
            warnings: report.warnings.clone(),
        })
    }
}

/// One row per point, coordinates then weight.
pub fn design_csv(design: &Design, columns: &[String]) -> String {
    let mut out = columns.join(",");
    out.push_str(",weight\n");
    for (p, w) in design.iter() {
        for x in p.iter() {
            write!(out, "{x},").unwrap();
        }
        writeln!(out, "{w}").unwrap();
    }
    out
}

pub fn trace_csv(report: &AlgoReport) -> String {
    let mut out = String::from("iteration,objective,min_phi,candidates\n");
    for t in &report.trace {
        writeln!(out, "{},{},{},{}", t.iteration, t.objective, t.min_phi, t.candidates).unwrap();
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

/// Writes the report files into `dir`, creating it if needed.
pub fn emit_report(report: &AlgoReport, cfg: &ProblemConfig, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let columns = cfg.model.input_names();
    let summary = Summary::new(report, cfg.model.id())?;
    write(dir, "design.csv", &design_csv(&report.design, &columns))?;
    write(dir, "raw_design.csv", &design_csv(&report.raw_design, &columns))?;
    write(dir, "trace.csv", &trace_csv(report))?;
    write(
        dir,
        "summary.json",
        &(serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"),
    )?;
    write(dir, "config.json", &(cfg.to_json() + "\n"))
}
