//! Command-line front end of `hrflow-core`.
//!
//! [`run`] parses arguments, applies an optional TOML config file, runs one
//! pipeline stage and writes `manifest.json` next to its outputs.

mod args;
mod commands;
mod config;
mod error;
mod manifest;

use std::ffi::OsString;
use std::time::Instant;

use clap::Parser;

pub use args::Cli;
pub use error::{CliError, Kind};

use manifest::Manifest;

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match run_inner(&argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    }
}

fn parse(argv: &[OsString]) -> Result<Cli, CliError> {
    Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            let _ = e.print();
            std::process::exit(0);
        }
        CliError::usage(e.to_string().trim_end().to_string())
    })
}

fn run_inner(argv: &[OsString]) -> Result<(), CliError> {
    let cli = match config::locate(argv) {
        Some((path, sub)) => parse(&config::merge(argv, &path, &sub)?)?,
        None => parse(argv)?,
    };
    std::fs::create_dir_all(&cli.out)?;
    let mut manifest = Manifest::new(&cli, argv);
    if let Some(path) = &cli.config {
        manifest.input(path)?;
    }
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {} threads: {e}", cli.threads.unwrap_or(0))))?;
    let outcome = pool.install(|| commands::dispatch(&cli, &mut manifest));
    manifest.finish(start.elapsed().as_secs_f64(), outcome.as_ref().err());
    manifest.write(&cli.out.join("manifest.json"))?;
    outcome
}
