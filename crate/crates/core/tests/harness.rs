//! End-to-end runs of the experiment harness on small grids.

use std::fs;
use std::path::Path;

use sqg_core::dump::read_dump;
use sqg_core::harness::{
    self, exit_code_for, ConfigFile, ExperimentConfig, ExperimentKind, Status, EXIT_CONFIG,
    EXIT_NUMERICAL,
};
use sqg_core::Error;

fn config(text: &str, dir: &Path) -> ExperimentConfig {
    let text = format!("output_dir = {:?}\n{text}", dir.to_string_lossy());
    ExperimentConfig::from_toml_str(&text).unwrap()
}

const STEADY: &str = r#"
experiment = "steady_state"
alpha = 1.5

[grid]
n = 64
box_length = 60.0

[forcing]
kind = "ring"
amplitude = 1e-3
k_lo = 1.0
k_hi = 2.0
seed = 1
"#;

fn relaxation(perturbation: &str) -> String {
    format!(
        r#"
experiment = "relaxation"
alpha = 1.5
p_list = [1.5, 2.0]
checks = ["mean_conservation"]

[grid]
n = 128
box_length = 60.0

[forcing]
kind = "ring"
amplitude = 1e-3
k_lo = 1.0
k_hi = 2.0
seed = 1

[initial_data]
preset = "steady_plus"

[initial_data.perturbation]
preset = "{perturbation}"
amplitude = 1.0

[stepper]
cfl_number = 0.5
t_end = 27.0
diagnostic_stride = 2

[fit]
window = [3.0, 27.0]
"#
    )
}

#[test]
fn zero_forcing_gives_a_zero_steady_state() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
experiment = "steady_state"
alpha = 1.5
[grid]
n = 32
box_length = 30.0
[forcing]
kind = "zero"
"#;
    let out = harness::run(&config(text, dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.summary.failed_checks());
    let ss = out.summary.steady_state.as_ref().unwrap();
    assert_eq!(ss.theta_tilde_l2, 0.0);
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("picard.csv").exists());
}

#[test]
fn steady_state_run_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(STEADY, dir.path());
    let first = harness::run(&cfg).unwrap();
    assert!(first.passed(), "{:?}", first.summary.failed_checks());
    assert_eq!(first.exit_code(), 0);
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    let (summary, csv) = (read("summary.json"), read("picard.csv"));
    harness::run(&cfg).unwrap();
    assert_eq!(summary, read("summary.json"));
    assert_eq!(csv, read("picard.csv"));
    let meta: serde_json::Value = serde_json::from_slice(&read("meta.json")).unwrap();
    assert!(meta.get("runtime_seconds").is_some());
    assert!(!String::from_utf8(summary)
        .unwrap()
        .contains("runtime_seconds"));
}

#[test]
fn dumps_round_trip_through_the_reader() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(STEADY, dir.path());
    cfg.output.dumps = true;
    cfg.output.plots_data = true;
    harness::run(&cfg).unwrap();
    let (field, meta) = read_dump(&dir.path().join("theta_tilde.bin")).unwrap();
    assert_eq!(field.grid().n(), 64);
    assert!(field.l2_norm() > 0.0);
    assert_eq!(meta.unwrap().alpha, 1.5);
    let plots = fs::read_to_string(dir.path().join("plots.csv")).unwrap();
    assert!(plots.starts_with("run,quantity,x,y\n"));
}

#[test]
fn mass_free_perturbations_decay_faster() {
    let dir = tempfile::tempdir().unwrap();
    let run = |preset: &str| {
        let cfg = config(&relaxation(preset), &dir.path().join(preset));
        let out = harness::run(&cfg).unwrap();
        assert!(out.passed(), "{preset}: {:?}", out.summary.failed_checks());
        out.summary.rate("l2").unwrap().fitted_exponent
    };
    let with_mass = run("gaussian");
    let without = run("mean_zero_ring");
    assert!(without < with_mass - 0.3, "{without} vs {with_mass}");
    // α₀ ≠ 0: close to -(2/α)(1 - 1/2) = -2/3 already on a small box
    assert!((with_mass + 2.0 / 3.0).abs() < 0.1, "{with_mass}");
    let csv = fs::read_to_string(dir.path().join("gaussian/trajectory.csv")).unwrap();
    assert!(csv.starts_with("time,one_plus_t,l1.5,l2,linf,mean,tail_mass"));
}

#[test]
fn divergent_picard_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &STEADY.replace("amplitude = 1e-3", "amplitude = 50.0"),
        dir.path(),
    );
    let err = harness::run(&cfg).unwrap_err();
    assert_eq!(exit_code_for(&err), EXIT_NUMERICAL);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "error");
}

#[test]
fn invalid_configs_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (STEADY.replace("alpha = 1.5", "alpha = 2.5"), "alpha"),
        (format!("m = 1.6\n{STEADY}"), "m"),
        (format!("checks = [\"nope\"]\n{STEADY}"), "checks"),
        (format!("p_list = [0.5]\n{STEADY}"), "p_list"),
    ];
    for (text, field) in cases {
        let text = format!("output_dir = {:?}\n{text}", dir.path().to_string_lossy());
        // some values are refused while parsing, others when the run starts
        let err = ExperimentConfig::from_toml_str(&text)
            .and_then(|cfg| harness::run(&cfg))
            .unwrap_err();
        assert_eq!(exit_code_for(&err), EXIT_CONFIG);
        match err.root() {
            Error::ConfigInvalid { field: f, .. } => assert_eq!(f, field),
            other => panic!("expected ConfigInvalid for {field}, got {other:?}"),
        }
    }
    let missing = STEADY.replace(
        "experiment = \"steady_state\"",
        "experiment = \"relaxation\"",
    );
    let text = format!("output_dir = {:?}\n{missing}", dir.path().to_string_lossy());
    let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
    assert!(matches!(err, Error::ConfigInvalid { ref field, .. } if field == "initial_data"));
}

#[test]
fn unknown_keys_are_rejected() {
    let text = format!("output_dir = \"x\"\nfrobnicate = 1\n{STEADY}");
    assert!(matches!(
        ExperimentConfig::from_toml_str(&text),
        Err(Error::ConfigInvalid { .. })
    ));
}

#[test]
fn empty_suite_is_an_empty_pass() {
    let out = harness::run_suite("empty", &[]).unwrap();
    assert!(out.report.runs.is_empty());
    assert!(out.report.matrix.is_empty());
    assert_eq!(out.report.exit_code, 0);
}

#[test]
fn suites_aggregate_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let configs: Vec<_> = [1.2, 1.5, 1.8]
        .iter()
        .map(|&a| {
            let mut c = config(STEADY, &dir.path().join(format!("a{a}")));
            c.alpha = a;
            c
        })
        .collect();
    let out = harness::run_suite("sweep", &configs).unwrap();
    assert_eq!(out.report.runs.len(), 3);
    assert_eq!(out.summaries.iter().flatten().count(), 3);
    let checks = ExperimentKind::SteadyState.default_checks().len();
    assert_eq!(out.report.matrix.len(), 3 * checks);
    assert_eq!(out.report.exit_code, 0);
    assert!(out.report.runs.iter().all(|r| r.status == Status::Pass));
}

#[test]
fn suites_report_failures_without_dropping_them() {
    let dir = tempfile::tempdir().unwrap();
    let good = config(STEADY, &dir.path().join("good"));
    let bad = config(
        &STEADY.replace("amplitude = 1e-3", "amplitude = 50.0"),
        &dir.path().join("bad"),
    );
    let out = harness::run_suite("mixed", &[good, bad]).unwrap();
    assert_eq!(out.report.runs.len(), 2);
    assert_eq!(out.report.runs[1].status, Status::Error);
    assert!(out.report.runs[1].error.is_some());
    assert_eq!(out.report.exit_code, EXIT_NUMERICAL);
}

#[test]
fn duplicate_output_dirs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(STEADY, dir.path());
    let err = harness::run_suite("dup", &[a.clone(), a]).unwrap_err();
    assert!(matches!(err, Error::ConfigInvalid { ref field, .. } if field == "output_dir"));
}

#[test]
fn suite_files_merge_defaults_into_runs() {
    let text = r#"
[suite]
name = "s"
output_dir = "out/s"

[defaults]
experiment = "semigroup_suite"
alpha = 1.5
checks = ["identity"]

[defaults.grid]
n = 64
box_length = 30.0

[[runs]]
alpha = 1.2

[[runs]]
name = "wide"
grid = { n = 64, box_length = 40.0 }
"#;
    let ConfigFile::Suite(suite) = ConfigFile::parse(text).unwrap() else {
        panic!("expected a suite");
    };
    assert_eq!(suite.runs.len(), 2);
    assert_eq!(suite.runs[0].alpha, 1.2);
    assert_eq!(suite.runs[0].display_name(), "run00");
    assert_eq!(suite.runs[0].output_dir, Path::new("out/s/run00"));
    assert_eq!(suite.runs[1].grid.box_length, 40.0);
    assert_eq!(suite.runs[1].checks, vec!["identity".to_string()]);
    assert_eq!(suite.runs[1].output_dir, Path::new("out/s/wide"));
}

#[test]
fn shipped_acceptance_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let file = ConfigFile::load(&path).unwrap();
        let mut file = file;
        for cfg in file.runs_mut() {
            cfg.validate().unwrap();
        }
        count += 1;
    }
    assert_eq!(count, 10);
}
