use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sqg_core::harness::{self, ConfigFile, ExperimentKind, RunSummary, Status};

/// Run SQG experiments described by TOML config files.
#[derive(Debug, Parser)]
#[command(name = "sqg", version, about)]
struct Cli {
    /// List the available experiments and their checks, then exit.
    #[arg(long)]
    list_experiments: bool,

    /// Worker threads for FFTs and suite runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single experiment or a suite file.
    Run {
        config: PathBuf,

        /// Write outputs here instead of the configured `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,

        /// Also write tidy `plots.csv` files for external plotting.
        #[arg(long)]
        emit_plots_data: bool,

        /// Also write binary field dumps.
        #[arg(long)]
        dumps: bool,
    },
}

fn list_experiments() {
    for kind in ExperimentKind::ALL {
        println!("{:<16} {}", kind.name(), kind.description());
        println!("{:<16} checks: {}", "", kind.checks().join(", "));
    }
}

fn print_summary(s: &RunSummary) {
    for c in &s.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!(
            "  {verdict} {:<28} {:<12.4e} {:?}",
            c.name, c.value, c.limit
        );
    }
    for note in &s.notes {
        println!("  note: {note}");
    }
    let status = match s.status {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
        Status::Error => "ERROR",
    };
    println!("{}: {status}", s.name);
}

fn run(
    config: PathBuf,
    output_dir: Option<PathBuf>,
    plots: bool,
    dumps: bool,
) -> sqg_core::Result<i32> {
    let mut file = ConfigFile::load(&config)?;
    if let Some(dir) = output_dir {
        file.override_output_dir(&dir);
    }
    for cfg in file.runs_mut() {
        cfg.output.plots_data |= plots;
        cfg.output.dumps |= dumps;
    }
    match file {
        ConfigFile::Single(cfg) => {
            let out = harness::run(&cfg)?;
            print_summary(&out.summary);
            Ok(out.exit_code())
        }
        ConfigFile::Suite(suite) => {
            let out = harness::run_suite_config(&suite)?;
            for (entry, summary) in out.report.runs.iter().zip(&out.summaries) {
                match summary {
                    Some(s) => print_summary(s),
                    None => println!(
                        "{}: ERROR {}",
                        entry.name,
                        entry.error.as_deref().unwrap_or("unknown error")
                    ),
                }
            }
            println!(
                "suite {}: {} runs, exit {}",
                out.report.name,
                out.report.runs.len(),
                out.report.exit_code
            );
            Ok(out.report.exit_code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(harness::EXIT_CONFIG as u8);
        }
    }
    if cli.list_experiments {
        list_experiments();
        return ExitCode::SUCCESS;
    }
    let Some(Command::Run {
        config,
        output_dir,
        emit_plots_data,
        dumps,
    }) = cli.command
    else {
        eprintln!("error: nothing to do; try `sqg run <config>` or `sqg --list-experiments`");
        return ExitCode::from(harness::EXIT_CONFIG as u8);
    };
    match run(config, output_dir, emit_plots_data, dumps) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code_for(&e) as u8)
        }
    }
}
