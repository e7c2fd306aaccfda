//! Reports, verdicts and CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::HypothesisReport;
use crate::error::{Error, Result};
use crate::stats::Estimate;

use super::config::{ExperimentConfig, ExperimentKind};
use super::ensemble_file::EnsembleFile;

pub const CSV_HEADER: &str = "n,estimate,stderr,N,seed";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub estimate: f64,
    pub stderr: f64,
    #[serde(rename = "N")]
    pub count: usize,
}

impl TableRow {
    pub fn new(n: usize, e: Estimate) -> Self {
        Self { n, estimate: e.value, stderr: e.stderr, count: e.count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), rows: Vec::new() }
    }

    pub fn push(&mut self, n: usize, e: Estimate) {
        self.rows.push(TableRow::new(n, e));
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.estimate).collect()
    }

    pub fn ns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.n as f64).collect()
    }
}

/// Writes rows with floats as shortest round-trip decimals and LF endings.
pub fn emit_csv(rows: &[TableRow], seed: u64) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.n, fmt_float(r.estimate), fmt_float(r.stderr), r.count, seed)
            .expect("writing to a string");
    }
    out
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

/// Inverse of [`emit_csv`]; returns the rows and the seed column.
pub fn parse_csv(text: &str) -> Result<(Vec<TableRow>, Option<u64>)> {
    let mut lines = text.split('\n');
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config(format!("CSV header must be '{CSV_HEADER}'")));
    }
    let mut rows = Vec::new();
    let mut seed = None;
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("CSV line {}: malformed row '{line}'", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        rows.push(TableRow {
            n: f[0].parse().map_err(|_| bad())?,
            estimate: f[1].parse().map_err(|_| bad())?,
            stderr: f[2].parse().map_err(|_| bad())?,
            count: f[3].parse().map_err(|_| bad())?,
        });
        let s: u64 = f[4].parse().map_err(|_| bad())?;
        if seed.is_some_and(|prev| prev != s) {
            return Err(bad());
        }
        seed = Some(s);
    }
    Ok((rows, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    LessThan,
}

impl Relation {
    fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Relation::AtMost => statistic <= threshold,
            Relation::AtLeast => statistic >= threshold,
            Relation::LessThan => statistic < threshold,
        }
    }
}

/// One pass/fail decision together with the threshold it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub statistic: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, statistic: f64, relation: Relation, threshold: f64) -> Self {
        let pass = relation.holds(statistic, threshold);
        Self { name: name.into(), statistic, relation, threshold, pass }
    }

    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self::new(name, statistic, Relation::AtMost, threshold)
    }

    pub fn at_least(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self::new(name, statistic, Relation::AtLeast, threshold)
    }

    /// Passes when `values` never increases, i.e. every step is `<= 0`.
    pub fn non_increasing(name: impl Into<String>, values: &[f64]) -> Self {
        Self::at_most(name, max_step(values), 0.0)
    }

    /// Passes when every step of `values` is `< 0`.
    pub fn decreasing(name: impl Into<String>, values: &[f64]) -> Self {
        Self::new(name, max_step(values), Relation::LessThan, 0.0)
    }
}

fn max_step(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Config,
    Environment,
    Flag,
}

/// Output of the calibrate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub source: String,
    pub knob: f64,
    pub lyapunov: Estimate,
    pub evaluations: usize,
    pub ensemble: EnsembleFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub code_version: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub forced: bool,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<HypothesisReport>,
    pub scalars: BTreeMap<String, Estimate>,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationArtifact>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `report.json`, one CSV per table and any calibrated ensemble.
    /// Every byte is a function of the report alone.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        for t in &self.tables {
            std::fs::write(dir.join(format!("{}.csv", t.name)), emit_csv(&t.rows, self.seed))?;
        }
        if let Some(c) = &self.calibration {
            std::fs::write(dir.join("calibrated_ensemble.json"), c.ensemble.to_json())?;
        }
        Ok(())
    }
}

/// Wall-clock record kept next to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub kind: ExperimentKind,
    pub workers: usize,
    pub seconds: f64,
}

impl Timing {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(dir.join("timing.json"), s)?;
        Ok(())
    }
}
