//! Verification experiments for `rodflow`.
//!
//! Each experiment reads a flat [`config::Config`], runs, and returns an
//! [`Outcome`]: a list of threshold checks, scalar metrics and CSV curves.
//! [`write_outcome`] turns it into `report.json` plus one CSV per curve.

pub mod config;
pub mod experiments;
pub mod setup;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

pub use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad command line or configuration; exit code 2.
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] rodflow::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Run(rodflow::Error::InvalidParameter(_)) => 2,
            _ => 1,
        }
    }
}

/// One pass/fail criterion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<"`, `">"`, `">="`, `"<="` or `"holds"`.
    pub relation: &'static str,
    pub threshold: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: "<", threshold, passed: value < threshold, detail: None }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: ">", threshold, passed: value > threshold, detail: None }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: ">=", threshold, passed: value >= threshold, detail: None }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            relation: "holds",
            threshold: 1.0,
            passed: ok,
            detail: None,
        }
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

/// Columns of numbers written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub curves: Vec<Curve>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metrics.insert(key.to_string(), v);
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    experiment: &'a str,
    passed: bool,
    checks: &'a [Check],
    metrics: &'a BTreeMap<String, serde_json::Value>,
    warnings: &'a [String],
    curves: Vec<String>,
    config: BTreeMap<String, String>,
}

fn write_curve(path: &Path, curve: &Curve) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", curve.columns.join(","))?;
    for row in &curve.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}

/// Writes `report.json` and the curves into `dir`.
pub fn write_outcome(dir: &Path, experiment: &str, cfg: &Config, outcome: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for c in &outcome.curves {
        let file = format!("{}.csv", c.name);
        write_curve(&dir.join(&file), c)?;
        names.push(file);
    }
    let report = Report {
        experiment,
        passed: outcome.passed(),
        checks: &outcome.checks,
        metrics: &outcome.metrics,
        warnings: &outcome.warnings,
        curves: names,
        config: cfg.resolved(),
    };
    let mut w = BufWriter::new(fs::File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut w, &report).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Experiments by subcommand name.
pub const EXPERIMENTS: &[&str] = &[
    "verify-isometry",
    "verify-mapping",
    "continuum-limit",
    "invariant-ldp",
    "edp-check",
    "bruna-chapman",
    "steady-state",
    "rate-functional",
    "control-recovery",
    "functional-identity",
];

/// Runs a named experiment. Unknown keys in `cfg` are a usage error.
pub fn run(experiment: &str, cfg: &Config) -> Result<Outcome, CliError> {
    use experiments::*;
    Ok(match experiment {
        "verify-isometry" => isometry::run(cfg)?,
        "verify-mapping" => mapping::run(cfg)?,
        "continuum-limit" => continuum::run(cfg)?,
        "invariant-ldp" => invariant::run(cfg)?,
        "edp-check" => edp::run(cfg)?,
        "bruna-chapman" => bruna_chapman::run(cfg)?,
        "steady-state" => steady::run(cfg)?,
        "rate-functional" => rate::run(cfg)?,
        "control-recovery" => control::run(cfg)?,
        "functional-identity" => identity::run(cfg)?,
        other => return Err(CliError::Usage(format!("unknown experiment `{other}`"))),
    })
}
