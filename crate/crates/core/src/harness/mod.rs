//! Config-driven experiment runner.
//!
//! A run reads an [`ExperimentConfig`], executes one experiment and writes
//! into its `output_dir`:
//!
//! - `summary.json`: config echo, checks, rate reports, steady-state report;
//! - `meta.json`: wall-clock data, kept apart so summaries are reproducible;
//! - CSV tables (`trajectory.csv`, `picard.csv`, ...);
//! - `plots.csv` in tidy `quantity,x,y` form when `output.plots_data` is set;
//! - binary field dumps when `output.dumps` is set.

pub mod config;
mod experiments;
pub mod report;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::dump::write_dump;
use crate::error::{Error, Result};

pub use config::{
    ConfigFile, ExperimentConfig, ExperimentKind, FitConfig, InitialData, OutputConfig,
    PropertyConfig, SemigroupConfig, SteadyConfig, SuiteConfig,
};
pub use report::{
    Check, Limit, MatrixRow, RunSummary, Status, SteadyReport, SuiteEntry, SuiteReport,
};

/// Exit status for a configuration problem.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a numerical failure (divergence, blow-up).
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit status an error maps to.
pub fn exit_code_for(err: &Error) -> i32 {
    match err.root() {
        Error::ConfigInvalid { .. }
        | Error::InvalidGrid(_)
        | Error::InvalidParams(_)
        | Error::BandEmpty { .. }
        | Error::BadDump { .. }
        | Error::Io(_)
        | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.summary.status.exit_code()
    }

    pub fn passed(&self) -> bool {
        self.summary.status == Status::Pass
    }
}

#[derive(Serialize)]
struct Meta {
    name: String,
    created_unix: u64,
    runtime_seconds: f64,
    version: &'static str,
    threads: usize,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Execute one experiment and write its outputs.
///
/// Numerical failures still leave a `summary.json` with status `error`
/// before the error is returned.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| {
        Error::config(
            "output_dir",
            format!("cannot create {}: {e}", dir.display()),
        )
    })?;
    let start = Instant::now();
    let mut summary = RunSummary::new(cfg);
    log::info!(
        "running {} ({}) into {}",
        summary.name,
        cfg.experiment,
        dir.display()
    );

    let artifacts = match experiments::execute(cfg, &mut summary) {
        Ok(a) => a,
        Err(e) => {
            summary.status = Status::Error;
            summary.notes.push(e.to_string());
            write_json(&dir.join("summary.json"), &summary)?;
            return Err(e.context(format!("run `{}`", summary.name)));
        }
    };
    summary.finish();

    for (name, text) in &artifacts.csv {
        fs::write(dir.join(name), text)?;
    }
    if cfg.output.plots_data {
        fs::write(
            dir.join("plots.csv"),
            tidy_csv(&summary.name, &artifacts.plots),
        )?;
    }
    if cfg.output.dumps {
        for (name, field, time) in &artifacts.dumps {
            write_dump(&dir.join(name), field, cfg.alpha, *time)?;
        }
    }
    write_json(&dir.join("summary.json"), &summary)?;
    let meta = Meta {
        name: summary.name.clone(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        runtime_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
    };
    write_json(&dir.join("meta.json"), &meta)?;

    for c in summary.failed_checks() {
        log::warn!(
            "{}: check {} failed ({} vs {:?})",
            summary.name,
            c.name,
            c.value,
            c.limit
        );
    }
    Ok(RunOutcome { summary })
}

fn tidy_csv(run: &str, plots: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("run,quantity,x,y\n");
    for (q, series) in plots {
        for (x, y) in series {
            let _ = writeln!(s, "{run},{q},{x},{y}");
        }
    }
    s
}

/// Aggregate of a suite, with the summaries of the runs that completed.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub report: SuiteReport,
    pub summaries: Vec<Option<RunSummary>>,
}

/// Run independent configs concurrently and aggregate their verdicts.
///
/// Two runs writing to the same `output_dir` is a configuration error,
/// detected before anything runs.
pub fn run_suite(name: &str, configs: &[ExperimentConfig]) -> Result<SuiteOutcome> {
    let mut seen = BTreeSet::new();
    for cfg in configs {
        if !seen.insert(cfg.output_dir.clone()) {
            return Err(Error::config(
                "output_dir",
                format!(
                    "`{}` is used by more than one run",
                    cfg.output_dir.display()
                ),
            ));
        }
    }
    let results: Vec<(SuiteEntry, Option<RunSummary>)> = configs
        .par_iter()
        .map(|cfg| {
            let mut entry = SuiteEntry {
                name: cfg.display_name(),
                experiment: cfg.experiment,
                alpha: cfg.alpha,
                output_dir: cfg.output_dir.clone(),
                status: Status::Error,
                exit_code: EXIT_NUMERICAL,
                error: None,
            };
            match run(cfg) {
                Ok(out) => {
                    entry.status = out.summary.status;
                    entry.exit_code = out.exit_code();
                    (entry, Some(out.summary))
                }
                Err(e) => {
                    log::error!("{}: {e}", entry.name);
                    entry.exit_code = exit_code_for(&e);
                    entry.error = Some(e.to_string());
                    (entry, None)
                }
            }
        })
        .collect();

    let mut matrix = Vec::new();
    for (entry, summary) in &results {
        if let Some(s) = summary {
            for c in &s.checks {
                matrix.push(MatrixRow {
                    run: entry.name.clone(),
                    experiment: entry.experiment,
                    alpha: entry.alpha,
                    check: c.name.clone(),
                    pass: c.pass,
                });
            }
        }
    }
    let exit_code = results.iter().map(|(e, _)| e.exit_code).max().unwrap_or(0);
    let (runs, summaries) = results.into_iter().unzip();
    Ok(SuiteOutcome {
        report: SuiteReport {
            name: name.to_string(),
            runs,
            matrix,
            exit_code,
        },
        summaries,
    })
}

/// Run a suite file and write `suite_summary.json` into its output directory.
pub fn run_suite_config(suite: &SuiteConfig) -> Result<SuiteOutcome> {
    let out = run_suite(&suite.name, &suite.runs)?;
    fs::create_dir_all(&suite.output_dir).map_err(|e| {
        Error::config(
            "suite.output_dir",
            format!("cannot create {}: {e}", suite.output_dir.display()),
        )
    })?;
    write_json(&suite.output_dir.join("suite_summary.json"), &out.report)?;
    Ok(out)
}
