//! `qcluster`: batch front end. Exit status is 0 on success, 1 for usage
//! errors and 2 for runtime failures.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use crate::config::{Cli, RunConfig};

/// Directory for reports when `--output` is not given.
const OUT_DIR_ENV: &str = "QCLUSTER_OUT_DIR";

fn report_path(config: &RunConfig) -> Option<PathBuf> {
    if let Some(p) = &config.output {
        return Some(PathBuf::from(p));
    }
    std::env::var_os(OUT_DIR_ENV).map(|dir| Path::new(&dir).join(format!("{}.json", config.subcommand)))
}

/// `out/run.json` + `gap` -> `out/run.gap.csv`
fn side_path(report: &Path, suffix: &str) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn write(config: &RunConfig, out: commands::Output) -> std::io::Result<()> {
    match report_path(config) {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, out.json)?;
            for (suffix, csv) in out.traces {
                std::fs::write(side_path(&path, &suffix), csv)?;
            }
            Ok(())
        }
        None => {
            print!("{}", out.json);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let config = RunConfig::from_command(&cli.command);
    let result = commands::run(&cli.command, &config).and_then(|out| write(&config, out).map_err(Into::into));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
