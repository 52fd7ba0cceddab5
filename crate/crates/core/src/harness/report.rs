//! Run summaries and the pass/fail records they carry.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::RateReport;
use crate::steady::AposterioriReport;

use super::config::{ExperimentConfig, ExperimentKind};

/// Acceptance region of a checked quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    AtMost(f64),
    AtLeast(f64),
    Within([f64; 2]),
}

impl Limit {
    pub fn admits(&self, value: f64) -> bool {
        match *self {
            Limit::AtMost(hi) => value <= hi,
            Limit::AtLeast(lo) => value >= lo,
            Limit::Within([lo, hi]) => value >= lo && value <= hi,
        }
    }
}

/// One named pass/fail comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: Limit,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, limit: Limit) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            pass: limit.admits(value),
        }
    }

    /// A check whose verdict is decided elsewhere.
    pub fn with_verdict(name: impl Into<String>, value: f64, limit: Limit, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Error => 3,
        }
    }
}

/// Picard outcome as written to the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyReport {
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
    pub residual_history: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub theta_tilde_l2: f64,
    pub forcing_l2: f64,
    /// `‖θ̃ - Λ^{-α} f‖₂`.
    pub correction_l2: f64,
    pub aposteriori: Option<AposterioriReport>,
}

/// Everything a run reports. Contains no timestamps, so equal configs give
/// byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub experiment: ExperimentKind,
    pub alpha: f64,
    pub status: Status,
    pub checks: Vec<Check>,
    pub rates: Vec<RateReport>,
    pub steady_state: Option<SteadyReport>,
    /// Reported quantities that carry no verdict.
    pub info: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

impl RunSummary {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        RunSummary {
            name: cfg.display_name(),
            experiment: cfg.experiment,
            alpha: cfg.alpha,
            status: Status::Pass,
            checks: Vec::new(),
            rates: Vec::new(),
            steady_state: None,
            info: BTreeMap::new(),
            notes: Vec::new(),
            config: cfg.clone(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn info(&mut self, key: impl Into<String>, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.info.insert(key.into(), v);
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::info!("{}: {msg}", self.name);
        self.notes.push(msg);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn rate(&self, quantity: &str) -> Option<&RateReport> {
        self.rates.iter().find(|r| r.quantity == quantity)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub(crate) fn finish(&mut self) {
        self.status = if self.checks.iter().all(|c| c.pass) {
            Status::Pass
        } else {
            Status::Fail
        };
    }
}

/// One row of the suite's pass/fail matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub run: String,
    pub experiment: ExperimentKind,
    pub alpha: f64,
    pub check: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub experiment: ExperimentKind,
    pub alpha: f64,
    pub output_dir: PathBuf,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
}

/// Aggregate of a suite. Failed and errored runs are listed, never dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub runs: Vec<SuiteEntry>,
    pub matrix: Vec<MatrixRow>,
    pub exit_code: i32,
}
