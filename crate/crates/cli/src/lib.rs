// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `pprobe` command line: corpus loading, run files and subcommands.

pub mod args;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod failure;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::process::ExitCode;

use anyhow::Context;
use clap::{CommandFactory, FromArgMatches};

use crate::args::{Cli, Command};
use crate::failure::{config_error, Classify, RunResult};

/// Finds `--config <path>` or `--config=<path>` before clap sees the line.
fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Position of the subcommand name: the first argument after the program
/// name that is not a global flag or its value.
fn subcommand_position(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        match s.as_ref() {
            "--config" | "--jobs" => i += 2,
            _ if s.starts_with("--config=") || s.starts_with("--jobs=") => i += 1,
            _ if s.starts_with('-') => return None,
            _ => return Some(i),
        }
    }
    None
}

/// Splices run-file entries into `argv` after the subcommand name.
fn expand(argv: Vec<OsString>) -> RunResult<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let Some(pos) = subcommand_position(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading run file {}", path.to_string_lossy()))
        .config()?;
    let entries = config::parse_config(&text)
        .with_context(|| format!("run file {}", path.to_string_lossy()))
        .config()?;
    let root = Cli::command();
    let sub = argv[pos].to_string_lossy().into_owned();
    if root.find_subcommand(&sub).is_none() {
        return Ok(argv);
    }
    let flags = config::to_flags(&entries, &root, &sub, &argv)
        .with_context(|| format!("run file {}", path.to_string_lossy()))
        .config()?;
    let mut out = argv[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

fn dispatch(command: &Command) -> RunResult<()> {
    use commands::{analyze, eval, info, kappa, train};
    match command {
        Command::Train(a) => train::run_train(a),
        Command::Eval(a) => eval::run(a),
        Command::Kappa(a) => kappa::run(a),
        Command::Detect(a) => analyze::run_detect(a),
        Command::Correlate(a) => analyze::run_correlate(a),
        Command::Calibrate(a) => analyze::run_calibrate(a),
        Command::AblateReport(a) => analyze::run_ablate(a),
        Command::LayerSweep(a) => train::run_sweep(a),
        Command::BundleInfo(a) => info::run(a),
    }
}

/// Runs one parsed command line inside a pool of `--jobs` workers.
pub fn run(cli: &Cli) -> RunResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    match cli.jobs {
        Some(0) => return Err(config_error("--jobs must be at least 1")),
        Some(n) => pool = pool.num_threads(n),
        None => {}
    }
    let pool = pool.build().context("starting worker pool").config()?;
    pool.install(|| dispatch(&cli.command))
}

/// Entry point shared by the binary and the tests: parses `argv` (program
/// name first), runs, reports errors on stderr and maps them to exit codes.
pub fn main_with_args(argv: impl IntoIterator<Item = OsString>) -> ExitCode {
    let argv = match expand(argv.into_iter().collect()) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {f}");
            return f.exit_code();
        }
    };
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
