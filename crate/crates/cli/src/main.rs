//! `frwmax <task> --config <path> [--key value]...`
//!
//! Exit status: 0 on success, 2 when a verification task ran but its check
//! failed, 1 on usage, configuration or runtime errors.

mod config;
mod tasks;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use frwmax_core::Execution;
use serde::Serialize;

use config::Settings;
use tasks::{Report, Task};

#[derive(Parser, Debug)]
#[command(name = "frwmax", version, about = "Spherical-means propagators on FRW space-times and their checks")]
struct Cli {
    task: Task,

    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Per-key overrides, `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Serialize)]
struct Summary<'a> {
    task: &'static str,
    config: &'a BTreeMap<String, String>,
    metrics: &'a serde_json::Value,
    pass: bool,
    wall_time_s: f64,
}

/// Worker count from `FRWMAX_THREADS`; 0 or unset means rayon's default.
fn thread_count() -> Result<usize, String> {
    match std::env::var("FRWMAX_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| format!("FRWMAX_THREADS must be a non-negative integer, got `{v}`")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(format!("FRWMAX_THREADS: {e}")),
    }
}

fn write_csv(path: &Path, report: &Report) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&report.header)?;
    for row in &report.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(
    dir: &Path,
    name: &str,
    task: Task,
    resolved: &BTreeMap<String, String>,
    report: &Report,
    wall: f64,
) -> Result<(PathBuf, PathBuf), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));
    write_csv(&csv_path, report).map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;
    let summary =
        Summary { task: task.name(), config: resolved, metrics: &report.metrics, pass: report.pass, wall_time_s: wall };
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| format!("cannot write {}: {e}", json_path.display()))?;
    Ok((csv_path, json_path))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let text = match &cli.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("cannot read config {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => None,
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    let mut settings = Settings::parse(text.as_deref(), &cli.overrides);
    let plan = match tasks::plan(cli.task, &mut settings) {
        Ok(p) => p,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let exec = if pool.current_num_threads() == 1 { Execution::Sequential } else { Execution::Parallel };

    let start = Instant::now();
    let report = match pool.install(|| plan.execute(exec)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", cli.task.name());
            return ExitCode::from(1);
        }
    };
    let wall = if plan.output.timing { start.elapsed().as_secs_f64() } else { 0.0 };

    match write_outputs(Path::new(&plan.output.dir), &plan.output.name, plan.task, settings.resolved(), &report, wall) {
        Ok((csv_path, json_path)) => {
            println!(
                "{}: {} ({} rows) -> {}, {}",
                plan.task.name(),
                if report.pass { "pass" } else { "FAIL" },
                report.rows.len(),
                csv_path.display(),
                json_path.display()
            );
            ExitCode::from(if report.pass { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
