//! Experiment configuration: one TOML file per run, or a suite of runs
//! sharing a `[defaults]` table.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::FitOptions;
use crate::dynamics::StepperConfig;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ModelParams};
use crate::scaled::TailGuard;
use crate::steady::{ForcingSpec, PicardOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SteadyState,
    Relaxation,
    SharpRate,
    SemigroupSuite,
    PropertySuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::SteadyState,
        ExperimentKind::Relaxation,
        ExperimentKind::SharpRate,
        ExperimentKind::SemigroupSuite,
        ExperimentKind::PropertySuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SteadyState => "steady_state",
            ExperimentKind::Relaxation => "relaxation",
            ExperimentKind::SharpRate => "sharp_rate",
            ExperimentKind::SemigroupSuite => "semigroup_suite",
            ExperimentKind::PropertySuite => "property_suite",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::SteadyState => {
                "Picard solve for the steady state, norm report, ε² order and fixedness under the dynamics"
            }
            ExperimentKind::Relaxation => {
                "evolve θ₀ - θ̃ and report decay rates and mass conservation"
            }
            ExperimentKind::SharpRate => {
                "fit Lᵖ relaxation exponents and the leading-term residual against their predictions"
            }
            ExperimentKind::SemigroupSuite => {
                "eigenpair of L, exact semigroup algebra, decay slopes and projections in the scaled frame"
            }
            ExperimentKind::PropertySuite => {
                "coercivity, Parseval, skew-symmetry, divergence, power round trip and stepper order"
            }
        }
    }

    /// Named checks this experiment knows, in reporting order.
    pub fn checks(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::SteadyState => &[
                "convergence",
                "geometric_decay",
                "bound",
                "order",
                "fixedness",
            ],
            ExperimentKind::Relaxation => &["mean_conservation", "steeper_than_leading"],
            ExperimentKind::SharpRate => {
                &["rates", "leading_gap", "lower_bound", "mean_conservation"]
            }
            ExperimentKind::SemigroupSuite => &[
                "eigenpair",
                "identity",
                "composition",
                "commutation",
                "slopes",
                "projections",
                "psi_family",
                "norm_transport",
            ],
            ExperimentKind::PropertySuite => &[
                "coercivity",
                "parseval",
                "skew_symmetry",
                "divergence_free",
                "power_round_trip",
                "stepper_order",
                "single_mode_decay",
            ],
        }
    }

    /// Checks run when `checks` is left empty.
    pub fn default_checks(self) -> &'static [&'static str] {
        match self {
            // fixedness integrates to t_end and only runs when asked for
            ExperimentKind::SteadyState => &["convergence", "geometric_decay", "bound", "order"],
            other => other.checks(),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial data, either `θ₀` itself or `θ̃` plus a perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Gaussian {
        amplitude: f64,
        #[serde(default = "unit")]
        width: f64,
    },
    /// `amplitude · G`, the self-similar profile at `t = 0`.
    GProfile {
        amplitude: f64,
    },
    MeanZeroRing {
        amplitude: f64,
        #[serde(default = "unit")]
        width: f64,
    },
    SteadyPlus {
        perturbation: Box<InitialData>,
    },
    Zero,
}

fn unit() -> f64 {
    1.0
}

impl InitialData {
    pub fn validate(&self, grid: &GridSpec, path: &str) -> Result<()> {
        let half = 0.5 * grid.box_length;
        let amp = |a: f64| {
            if a.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{path}.amplitude"), "must be finite"))
            }
        };
        let width = |w: f64| {
            if w >= grid.dx() && w <= 0.25 * half {
                Ok(())
            } else {
                Err(Error::config(
                    format!("{path}.width"),
                    format!("must lie in [dx, L/8] = [{}, {}]", grid.dx(), 0.25 * half),
                ))
            }
        };
        match self {
            InitialData::Gaussian {
                amplitude,
                width: w,
            }
            | InitialData::MeanZeroRing {
                amplitude,
                width: w,
            } => {
                amp(*amplitude)?;
                width(*w)
            }
            InitialData::GProfile { amplitude } => amp(*amplitude),
            InitialData::SteadyPlus { perturbation } => match **perturbation {
                InitialData::SteadyPlus { .. } => Err(Error::config(
                    format!("{path}.perturbation"),
                    "steady_plus cannot be nested",
                )),
                ref p => p.validate(grid, &format!("{path}.perturbation")),
            },
            InitialData::Zero => Ok(()),
        }
    }
}

/// Rate-fit settings shared by the dynamics experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub window: [f64; 2],
    /// End fit windows at the wrap-around time `(f·L/2)^α`.
    pub clip_to_wraparound: bool,
    pub wraparound_fraction: f64,
    pub tolerance: f64,
    pub min_r_squared: f64,
    pub min_samples: usize,
    /// Required excess of the leading-term residual exponent over that of `‖v‖₂`.
    pub leading_gap: f64,
    /// Factor in `‖v(t)‖₂ ≥ c·|α₀|·‖comparison_profile(1, t)‖₂`.
    pub lower_bound_factor: f64,
    /// Relative drift allowed in `∫v`.
    pub mean_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            window: [10.0, 200.0],
            clip_to_wraparound: true,
            wraparound_fraction: 0.3,
            tolerance: 0.05,
            min_r_squared: 0.99,
            min_samples: 10,
            leading_gap: 0.3,
            lower_bound_factor: 0.5,
            mean_tolerance: 1e-10,
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            tolerance: self.tolerance,
            min_r_squared: self.min_r_squared,
            min_samples: self.min_samples,
        }
    }

    /// `(fraction·L/2)^α`.
    pub fn wraparound_time(&self, box_length: f64, alpha: f64) -> f64 {
        (self.wraparound_fraction * 0.5 * box_length).powf(alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyConfig {
    /// Largest contraction ratio accepted as geometric decay.
    pub max_contraction: f64,
    /// Accepted range for the measured order of `‖θ̃ - Λ^{-α}f‖₂` in ε.
    pub order_range: [f64; 2],
    pub fixedness_t_end: f64,
    pub fixedness_dt: f64,
    /// Bound is `factor · tol · t_end`.
    pub fixedness_factor: f64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig {
            max_contraction: 0.5,
            order_range: [1.8, 2.2],
            fixedness_t_end: 50.0,
            fixedness_dt: 0.5,
            fixedness_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemigroupConfig {
    pub taus: Vec<f64>,
    /// Interior mask radius as a fraction of `L/2`.
    pub mask_fraction: f64,
    pub eigen_masked_tol: f64,
    pub eigen_unmasked_tol: f64,
    pub identity_tol: f64,
    pub algebra_tol: f64,
    pub slope_window: [f64; 2],
    pub slope_samples: usize,
    pub slope_tolerance: f64,
    /// Lᵖ exponents probed for the slope checks.
    pub slope_p: Vec<f64>,
    /// Weight of the `L²(m)` slope check.
    pub slope_m: f64,
    /// The `L²(m)` probe vanishes like `|ξ|^{m-1+offset}` at the origin.
    pub slope_m_offset: f64,
    /// Weight of the analytic mean-zero probe, predicted slope `1 - (m+2)/α`.
    pub slope_analytic_m: f64,
    /// `μ` values of the `ψ_μ` check; unset means `-1/α` and `-2/α`.
    pub psi_mus: Option<Vec<f64>>,
    /// Masked relative residual allowed for `ψ_μ`.
    pub psi_tol: f64,
}

impl SemigroupConfig {
    pub fn psi_mus(&self, alpha: f64) -> Vec<f64> {
        self.psi_mus
            .clone()
            .unwrap_or_else(|| vec![-1.0 / alpha, -2.0 / alpha])
    }
}

impl Default for SemigroupConfig {
    fn default() -> Self {
        SemigroupConfig {
            taus: vec![0.5, 1.0, 2.0],
            mask_fraction: 0.5,
            eigen_masked_tol: 1e-6,
            eigen_unmasked_tol: 1e-3,
            identity_tol: 1e-12,
            algebra_tol: 1e-10,
            slope_window: [1.0, 4.0],
            slope_samples: 13,
            slope_tolerance: 0.1,
            slope_p: vec![1.0, 1.5, 2.0],
            slope_m: 1.4,
            slope_m_offset: 0.05,
            slope_analytic_m: 2.0,
            psi_mus: None,
            psi_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyConfig {
    pub samples: usize,
    pub p_values: Vec<f64>,
    pub max_mode: i64,
    pub coercivity_floor: f64,
    pub identity_tol: f64,
    pub order_range: [f64; 2],
    pub order_dts: Vec<f64>,
    pub single_mode_tol: f64,
}

impl Default for PropertyConfig {
    fn default() -> Self {
        PropertyConfig {
            samples: 100,
            p_values: vec![2.0, 3.0, 4.0],
            max_mode: 8,
            coercivity_floor: -1e-12,
            identity_tol: 1e-10,
            order_range: [1.8, 2.2],
            order_dts: vec![0.02, 0.01, 0.005],
            single_mode_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write binary dumps of θ̃, snapshots and the final state.
    pub dumps: bool,
    /// Write tidy `quantity,x,y` CSV files for plotting.
    pub plots_data: bool,
}

/// One experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub name: Option<String>,
    pub alpha: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    /// Weight for `L²(m)` diagnostics; `None` disables them.
    #[serde(default)]
    pub m: Option<f64>,
    /// Subset of the experiment's checks; empty means its defaults.
    #[serde(default)]
    pub checks: Vec<String>,
    pub grid: GridSpec,
    #[serde(default = "default_forcing")]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub initial_data: Option<InitialData>,
    #[serde(default)]
    pub stepper: Option<StepperConfig>,
    #[serde(default)]
    pub picard: PicardOptions,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub tail_guard: TailGuard,
    #[serde(default)]
    pub steady: SteadyConfig,
    #[serde(default)]
    pub semigroup: SemigroupConfig,
    #[serde(default)]
    pub property: PropertyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_dealias() -> f64 {
    ModelParams::DEFAULT_DEALIAS_FRACTION
}

fn default_p_list() -> Vec<f64> {
    vec![2.0]
}

fn default_forcing() -> ForcingSpec {
    ForcingSpec::Zero
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.experiment.name().to_string())
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::with_dealias(self.alpha, self.dealias_fraction)
            .map_err(|e| Error::config("alpha", e.to_string()))
    }

    /// Checks to run, in the experiment's reporting order.
    pub fn active_checks(&self) -> Vec<&'static str> {
        let wanted: Vec<&str> = if self.checks.is_empty() {
            self.experiment.default_checks().to_vec()
        } else {
            self.checks.iter().map(String::as_str).collect()
        };
        self.experiment
            .checks()
            .iter()
            .copied()
            .filter(|c| wanted.contains(c))
            .collect()
    }

    pub fn wants(&self, check: &str) -> bool {
        self.active_checks().contains(&check)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::config(
                "alpha",
                format!("{} is outside (1, 2)", self.alpha),
            ));
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Error::config("dealias_fraction", "must lie in (0, 1]"));
        }
        self.grid
            .validate()
            .map_err(|e| Error::config("grid", e.to_string()))?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        if self.p_list.is_empty() || self.p_list.iter().any(|&p| !(p >= 1.0)) {
            return Err(Error::config(
                "p_list",
                "needs at least one exponent, each >= 1",
            ));
        }
        if let Some(m) = self.m {
            let hi = 3.0 - self.alpha;
            if !(m > 1.0 && m < hi) {
                return Err(Error::config(
                    "m",
                    format!("must lie in (1, 3 - alpha) = (1, {hi})"),
                ));
            }
        }
        let known = self.experiment.checks();
        if let Some(bad) = self.checks.iter().find(|c| !known.contains(&c.as_str())) {
            return Err(Error::config(
                "checks",
                format!(
                    "`{bad}` is not a check of {}; known: {}",
                    self.experiment,
                    known.join(", ")
                ),
            ));
        }
        self.forcing.validate()?;
        if let Some(init) = &self.initial_data {
            init.validate(&self.grid, "initial_data")?;
        }
        if let Some(st) = &self.stepper {
            st.validate()?;
        }
        if self.picard.max_iter == 0 {
            return Err(Error::config("picard.max_iter", "must be at least 1"));
        }
        if let Some(tol) = self.picard.tol {
            if !(tol > 0.0) {
                return Err(Error::config("picard.tol", "must be positive"));
            }
        }
        let [lo, hi] = self.fit.window;
        if !(lo >= 0.0 && lo < hi) {
            return Err(Error::config("fit.window", "need 0 <= t_lo < t_hi"));
        }
        if !(self.fit.wraparound_fraction > 0.0 && self.fit.wraparound_fraction <= 1.0) {
            return Err(Error::config(
                "fit.wraparound_fraction",
                "must lie in (0, 1]",
            ));
        }
        if !(self.tail_guard.radius_fraction > 0.0 && self.tail_guard.radius_fraction <= 1.0) {
            return Err(Error::config(
                "tail_guard.radius_fraction",
                "must lie in (0, 1]",
            ));
        }
        let sg = &self.semigroup;
        if sg.taus.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::config("semigroup.taus", "must be positive"));
        }
        if !(sg.mask_fraction > 0.0 && sg.mask_fraction <= 1.0) {
            return Err(Error::config(
                "semigroup.mask_fraction",
                "must lie in (0, 1]",
            ));
        }
        if !(sg.slope_window[0] < sg.slope_window[1]) || sg.slope_samples < 3 {
            return Err(Error::config(
                "semigroup.slope_window",
                "need t_lo < t_hi and >= 3 samples",
            ));
        }
        if !(sg.slope_m > 1.0 && sg.slope_m < 2.0) {
            return Err(Error::config("semigroup.slope_m", "must lie in (1, 2)"));
        }
        if !(sg.slope_m_offset > 0.0) {
            return Err(Error::config(
                "semigroup.slope_m_offset",
                "must be positive",
            ));
        }
        if !(sg.slope_analytic_m >= 0.0) {
            return Err(Error::config(
                "semigroup.slope_analytic_m",
                "must be non-negative",
            ));
        }
        if sg.psi_mus.iter().flatten().any(|&mu| !(mu <= 0.0)) {
            return Err(Error::config("semigroup.psi_mus", "must be non-positive"));
        }
        if self.property.samples == 0 {
            return Err(Error::config("property.samples", "must be at least 1"));
        }
        if self.property.order_dts.len() < 2 {
            return Err(Error::config(
                "property.order_dts",
                "need at least two step sizes",
            ));
        }
        self.validate_for_experiment()
    }

    fn validate_for_experiment(&self) -> Result<()> {
        match self.experiment {
            ExperimentKind::Relaxation | ExperimentKind::SharpRate => {
                if self.initial_data.is_none() {
                    return Err(Error::config(
                        "initial_data",
                        "required for dynamics experiments",
                    ));
                }
                if self.stepper.is_none() {
                    return Err(Error::config(
                        "stepper",
                        "required for dynamics experiments",
                    ));
                }
                if self.experiment == ExperimentKind::SharpRate && !self.p_list.contains(&2.0) {
                    return Err(Error::config("p_list", "sharp_rate needs p = 2"));
                }
            }
            ExperimentKind::SteadyState
                if !(self.steady.fixedness_t_end > 0.0 && self.steady.fixedness_dt > 0.0) =>
            {
                return Err(Error::config(
                    "steady.fixedness_t_end",
                    "t_end and dt must be positive",
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// A list of runs built from shared defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub runs: Vec<ExperimentConfig>,
}

/// Either a single run or a suite, as found in a config file.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // built once per invocation
pub enum ConfigFile {
    Single(ExperimentConfig),
    Suite(SuiteConfig),
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(toml_error)?;
        if table.contains_key("runs") || table.contains_key("suite") {
            parse_suite(table).map(ConfigFile::Suite)
        } else {
            ExperimentConfig::from_toml_str(text).map(ConfigFile::Single)
        }
    }

    /// Replace the output location; suite runs move under `dir/<name>`.
    pub fn override_output_dir(&mut self, dir: &Path) {
        match self {
            ConfigFile::Single(cfg) => cfg.output_dir = dir.to_path_buf(),
            ConfigFile::Suite(suite) => {
                suite.output_dir = dir.to_path_buf();
                for run in &mut suite.runs {
                    run.output_dir = dir.join(run.display_name());
                }
            }
        }
    }

    pub fn runs_mut(&mut self) -> Vec<&mut ExperimentConfig> {
        match self {
            ConfigFile::Single(cfg) => vec![cfg],
            ConfigFile::Suite(suite) => suite.runs.iter_mut().collect(),
        }
    }
}

fn parse_suite(mut table: toml::Table) -> Result<SuiteConfig> {
    let allowed: BTreeSet<&str> = ["suite", "defaults", "runs"].into();
    if let Some(k) = table.keys().find(|k| !allowed.contains(k.as_str())) {
        return Err(Error::config(
            k.clone(),
            "suite files only take [suite], [defaults] and [[runs]]",
        ));
    }
    let header = match table.remove("suite") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(Error::config("suite", "must be a table")),
        None => return Err(Error::config("suite", "missing [suite] table")),
    };
    let name = match header.get("name") {
        Some(toml::Value::String(s)) => s.clone(),
        Some(_) => return Err(Error::config("suite.name", "must be a string")),
        None => "suite".to_string(),
    };
    let output_dir = match header.get("output_dir") {
        Some(toml::Value::String(s)) => PathBuf::from(s),
        _ => return Err(Error::config("suite.output_dir", "missing or not a string")),
    };
    if let Some(k) = header
        .keys()
        .find(|k| !matches!(k.as_str(), "name" | "output_dir"))
    {
        return Err(Error::config(format!("suite.{k}"), "unknown key"));
    }
    let defaults = match table.remove("defaults") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(Error::config("defaults", "must be a table")),
        None => toml::Table::new(),
    };
    let runs = match table.remove("runs") {
        Some(toml::Value::Array(a)) => a,
        Some(_) => return Err(Error::config("runs", "must be an array of tables")),
        None => Vec::new(),
    };
    let mut out = Vec::with_capacity(runs.len());
    for (i, run) in runs.into_iter().enumerate() {
        let toml::Value::Table(run) = run else {
            return Err(Error::config(format!("runs[{i}]"), "must be a table"));
        };
        let mut merged = defaults.clone();
        merge(&mut merged, run);
        let run_name = match merged.get("name") {
            Some(toml::Value::String(s)) => s.clone(),
            _ => format!("run{i:02}"),
        };
        merged
            .entry("name")
            .or_insert_with(|| toml::Value::String(run_name.clone()));
        merged.entry("output_dir").or_insert_with(|| {
            toml::Value::String(output_dir.join(&run_name).to_string_lossy().into_owned())
        });
        let text = toml::to_string(&merged)
            .map_err(|e| Error::config(format!("runs[{i}]"), e.to_string()))?;
        let cfg = ExperimentConfig::from_toml_str(&text)
            .map_err(|e| e.context(format!("run `{run_name}`")))?;
        out.push(cfg);
    }
    Ok(SuiteConfig {
        name,
        output_dir,
        runs: out,
    })
}

/// Recursive table merge; values in `over` win.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let field = e
        .message()
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string());
    Error::config(field, e.to_string().trim().to_string())
}
