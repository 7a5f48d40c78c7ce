//! `pfsgd-bench`: experiment runner for the step-size tuner.

mod cli;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use crate::cli::Cli;
use crate::config::{FileConfig, RunConfig};

/// Exit status when a proven inequality failed.
const CHECK_FAILURE: u8 = 2;

fn run(cli: Cli) -> Result<u64> {
    let (command, overrides) = cli.command.split();
    let file = match &overrides.config {
        Some(path) => config::read_file(path)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(command, file, &overrides)?;
    let problem = commands::prepare(&cfg)?;
    let report = commands::execute(&cfg, problem.as_ref())?;
    let written = report.outputs.write(&cfg.out_dir)?;
    println!("{}", report.headline);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(report.failures)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} proven checks failed; see diagnostics");
            ExitCode::from(CHECK_FAILURE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
