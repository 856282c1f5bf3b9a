//! Experiment harness behind the `bregvi` subcommands.
//!
//! A run is described by an [`ExperimentSpec`], resolved from an optional
//! JSON config plus command-line overrides and validated before any
//! computation. Each experiment returns an [`ExperimentResult`] holding
//! CSV payloads and a JSON summary; [`ExperimentResult::write`] places them
//! as `<experiment>_<curve>.csv` and `summary.json`.

mod envelope;
mod landscape;
mod spec;
mod sweep;
mod trajectory;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::optimizers::Trajectory;
use crate::suite::{run_suite, SuiteOptions};

pub use envelope::cmd_envelope;
pub use landscape::cmd_landscape;
pub use spec::{ConfigFile, Experiment, ExperimentSpec, Family, ModelDescriptor, Overrides};
pub use sweep::cmd_sweep;
pub use trajectory::cmd_trajectory;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// 2 for spec errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Spec(_) => 2,
            _ => 1,
        }
    }
}

pub type ExperimentOutcome<T> = std::result::Result<T, ExperimentError>;

pub(crate) fn spec_err<T>(msg: impl Into<String>) -> ExperimentOutcome<T> {
    Err(ExperimentError::Spec(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    /// (curve name, CSV text), in output order.
    pub csv: Vec<(String, String)>,
    pub summary: Value,
    /// Bound or check violations; nonzero means exit status 1.
    pub violations: usize,
}

impl ExperimentResult {
    pub fn file_name(&self, curve: &str) -> String {
        format!("{}_{}.csv", self.spec.name.as_str(), curve)
    }

    /// The summary document: spec echo, experiment summary, violation count.
    pub fn summary_json(&self) -> ExperimentOutcome<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            experiment: &'a str,
            spec: &'a ExperimentSpec,
            summary: &'a Value,
            violations: usize,
            files: Vec<String>,
        }
        let doc = Doc {
            experiment: self.spec.name.as_str(),
            spec: &self.spec,
            summary: &self.summary,
            violations: self.violations,
            files: self.csv.iter().map(|(c, _)| self.file_name(c)).collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> ExperimentOutcome<()> {
        fs::create_dir_all(dir)?;
        for (curve, text) in &self.csv {
            fs::write(dir.join(self.file_name(curve)), text)?;
        }
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        Ok(())
    }
}

/// Runs the experiment named in the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> ExperimentOutcome<ExperimentResult> {
    match spec.name {
        Experiment::Landscape => cmd_landscape(spec),
        Experiment::Envelope => cmd_envelope(spec),
        Experiment::Trajectory => cmd_trajectory(spec),
        Experiment::Sweep => cmd_sweep(spec),
        Experiment::Verify => cmd_verify(spec),
    }
}

/// Runs the invariant suite. Failures are counted, not raised.
pub fn cmd_verify(spec: &ExperimentSpec) -> ExperimentOutcome<ExperimentResult> {
    let checks = run_suite(&SuiteOptions {
        seed: spec.seed,
        grid_size: spec.grid,
        panels: spec.panels,
        inject_grad_fault: spec.inject_fault,
    })?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    let mut table = Row::header(&["check_name", "max_rel_err", "tolerance", "pass"]);
    for c in &checks {
        table.push(Row::new().text(&c.check_name).num(c.max_rel_err).num(c.tolerance).flag(c.pass));
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        csv: vec![("checks".into(), table.finish())],
        summary: serde_json::json!({
            "checks": checks,
            "total": checks.len(),
            "failed": failed,
        }),
        violations: failed,
    })
}

/// Columns k, [phi_0..], dist, loss, contraction, collinearity. The
/// contraction on row k describes the step k → k+1.
pub(crate) fn trajectory_csv(t: &Trajectory, with_phi: bool) -> String {
    let d = t.iterates.first().map_or(0, |p| p.dim());
    let mut cols = vec!["k".to_string()];
    if with_phi {
        cols.extend((0..d).map(|i| format!("phi_{i}")));
    }
    cols.extend(["dist", "loss", "contraction", "collinearity"].map(String::from));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Row::header(&cols);
    for k in 0..t.len() {
        let mut row = Row::new().int(k);
        if with_phi {
            for &x in t.iterates[k].iter() {
                row = row.num(x);
            }
        }
        table.push(
            row.num(t.dist[k])
                .num(t.loss[k])
                .opt(t.contraction.get(k).copied().flatten())
                .num(t.collinearity[k]),
        );
    }
    table.finish()
}

/// Round-trip decimal: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// CSV builder; one `Row` per line.
#[derive(Debug, Default)]
pub(crate) struct Row(Vec<String>);

impl Row {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn num(mut self, x: f64) -> Self {
        self.0.push(fmt_num(x));
        self
    }

    pub fn opt(mut self, x: Option<f64>) -> Self {
        self.0.push(x.map(fmt_num).unwrap_or_default());
        self
    }

    pub fn int(mut self, k: usize) -> Self {
        self.0.push(k.to_string());
        self
    }

    pub fn text(mut self, s: &str) -> Self {
        self.0.push(s.to_string());
        self
    }

    pub fn flag(mut self, b: bool) -> Self {
        self.0.push(b.to_string());
        self
    }

    pub fn blank(mut self) -> Self {
        self.0.push(String::new());
        self
    }

    pub fn header(cols: &[&str]) -> Table {
        Table(cols.join(",") + "\n")
    }
}

#[derive(Debug)]
pub(crate) struct Table(String);

impl Table {
    pub fn push(&mut self, row: Row) {
        let _ = writeln!(self.0, "{}", row.0.join(","));
    }

    pub fn finish(self) -> String {
        self.0
    }
}
