use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::Cli;
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct FileRecord {
    path: PathBuf,
    bytes: u64,
    sha256: String,
}

fn record(path: &Path) -> CliResult<FileRecord> {
    let data = std::fs::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let digest = Sha256::digest(&data);
    Ok(FileRecord {
        path: path.to_path_buf(),
        bytes: data.len() as u64,
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Machine-readable record of one run.
#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    args: Vec<String>,
    version: String,
    seed: u64,
    threads: usize,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exit_code: Option<i32>,
}

impl Manifest {
    pub fn new(cli: &Cli, argv: &[OsString]) -> Self {
        Self {
            command: cli.command.name().to_string(),
            args: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cli.seed,
            threads: cli.threads.unwrap_or_else(rayon::current_num_threads),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seconds: None,
            error: None,
            exit_code: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(record(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.push(record(path)?);
        Ok(())
    }

    pub fn finish(&mut self, seconds: f64, error: Option<&CliError>) {
        self.seconds = Some(seconds);
        if let Some(e) = error {
            self.error = Some(e.to_string());
            self.exit_code = Some(e.kind.exit_code());
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
