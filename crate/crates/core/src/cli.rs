//! Command-line front end. `run` returns the exit code and the text that
//! would be printed so the binary stays a thin wrapper and tests need no
//! subprocesses.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::apps::{build_fbp, AppName, AppVersion, BuildConfig, Paradigm, Stage};
use crate::collection::write_dataset;
use crate::graph::export_dot;
use crate::metrics::{diff, manifest};
use crate::sim::{collect_dataset, run_scenario, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "doaflow", about = "Run, inspect and compare the reference applications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one app version and print its report
    Run {
        /// ride_allocation, mblogger, insurance_claims or playlist_builder
        app: AppName,
        /// fbp or soa
        paradigm: Paradigm,
        /// min, data or ml
        stage: Stage,
        #[arg(long, default_value_t = 100)]
        ticks: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// also write the report here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Emit the flow graph of a stage as DOT
    Graph {
        /// ride_allocation, mblogger, insurance_claims or playlist_builder
        app: AppName,
        /// min, data or ml
        stage: Stage,
        /// write here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the data stage and write the offline dataset
    Collect {
        /// ride_allocation, mblogger, insurance_claims or playlist_builder
        app: AppName,
        #[arg(long, default_value_t = 100)]
        ticks: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// JSONL destination
        #[arg(long)]
        out: PathBuf,
    },
    /// Affected components between two stages
    Diff {
        /// ride_allocation, mblogger, insurance_claims or playlist_builder
        app: AppName,
        /// min, data or ml
        from: Stage,
        /// min, data or ml
        to: Stage,
        #[arg(long)]
        /// fbp or soa
        paradigm: Paradigm,
    },
    /// Compare the min-stage outputs of both paradigms
    Equiv {
        /// ride_allocation, mblogger, insurance_claims or playlist_builder
        app: AppName,
        #[arg(long, default_value_t = 100)]
        ticks: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliOutcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliOutcome {
    fn ok(stdout: String) -> Self {
        CliOutcome { code: EXIT_OK, stdout, stderr: String::new() }
    }

    fn fail(code: i32, stderr: String) -> Self {
        CliOutcome { code, stdout: String::new(), stderr }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Parses `argv` (program name first) and executes the command.
pub fn run<I, T>(argv: I) -> CliOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliOutcome::ok(text),
                _ => CliOutcome::fail(EXIT_USAGE, text),
            };
        }
    };
    match execute(cli.command) {
        Ok(outcome) => outcome,
        Err(message) => CliOutcome::fail(EXIT_FAILURE, format!("error: {message}\n")),
    }
}

fn execute(command: Command) -> Result<CliOutcome, String> {
    match command {
        Command::Run { app, paradigm, stage, ticks, seed, report } => {
            let scenario = Scenario::new(app, seed, ticks);
            let r = run_scenario(&scenario, AppVersion::new(app, paradigm, stage)).map_err(|e| e.to_string())?;
            let json = r.to_json() + "\n";
            if let Some(path) = report {
                write_file(&path, &json)?;
            }
            Ok(CliOutcome::ok(json))
        }
        Command::Graph { app, stage, out } => {
            let dot = export_dot(&build_fbp(app, stage, &BuildConfig::placeholder(0)).graph);
            match out {
                Some(path) => {
                    write_file(&path, &dot)?;
                    Ok(CliOutcome::ok(format!("wrote {}\n", path.display())))
                }
                None => Ok(CliOutcome::ok(dot)),
            }
        }
        Command::Collect { app, ticks, seed, out } => {
            let rows = collect_dataset(&Scenario::new(app, seed, ticks)).map_err(|e| e.to_string())?;
            let n = write_dataset(&rows, &out).map_err(|e| e.to_string())?;
            Ok(CliOutcome::ok(format!("wrote {n} rows to {}\n", out.display())))
        }
        Command::Diff { app, from, to, paradigm } => {
            let a = manifest(AppVersion::new(app, paradigm, from));
            let b = manifest(AppVersion::new(app, paradigm, to));
            Ok(CliOutcome::ok(diff(&a, &b).table()))
        }
        Command::Equiv { app, ticks, seed } => {
            let scenario = Scenario::new(app, seed, ticks);
            let report = |p| run_scenario(&scenario, AppVersion::new(app, p, Stage::Min)).map_err(|e| e.to_string());
            let (fbp, soa) = (report(Paradigm::Fbp)?, report(Paradigm::Soa)?);
            if fbp.digest == soa.digest {
                Ok(CliOutcome::ok(format!("MATCH {}\n", fbp.digest)))
            } else {
                Ok(CliOutcome {
                    code: EXIT_MISMATCH,
                    stdout: format!("MISMATCH fbp={} soa={}\n", fbp.digest, soa.digest),
                    stderr: String::new(),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &str) -> CliOutcome {
        run(std::iter::once("doaflow").chain(args.split_whitespace()))
    }

    #[test]
    fn diff_ride_fbp_min_data() {
        let out = cli("diff ride_allocation min data --paradigm fbp");
        assert_eq!(out.code, EXIT_OK);
        assert!(out.stdout.ends_with("affected_count 1\n"), "{}", out.stdout);
    }

    #[test]
    fn unknown_app_is_a_usage_error() {
        let out = cli("run nosuchapp fbp min");
        assert_eq!(out.code, EXIT_USAGE);
        assert!(out.stderr.contains("nosuchapp"));
    }

    #[test]
    fn missing_arguments_are_usage_errors() {
        assert_eq!(cli("diff ride_allocation min").code, EXIT_USAGE);
        assert_eq!(cli("").code, EXIT_USAGE);
        assert_eq!(cli("graph ride_allocation max").code, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli("--help").code, EXIT_OK);
    }

    #[test]
    fn equiv_playlist_matches() {
        let out = cli("equiv playlist_builder --ticks 50 --seed 1");
        assert_eq!(out.code, EXIT_OK);
        assert!(out.stdout.starts_with("MATCH "));
    }

    #[test]
    fn collect_without_offline_dataset_fails_at_runtime() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let out = cli(&format!("collect mblogger --ticks 5 --out {}", path.display()));
        assert_eq!(out.code, EXIT_FAILURE);
        assert!(!path.exists());
    }

    #[test]
    fn graph_prints_dot() {
        let out = cli("graph insurance_claims ml");
        assert_eq!(out.code, EXIT_OK);
        assert!(out.stdout.starts_with("digraph"));
        assert!(out.stdout.contains("classifier"));
    }
}
