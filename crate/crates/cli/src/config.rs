use std::ffi::OsString;
use std::path::Path;

use crate::error::{CliError, CliResult, Kind};

/// Global flags, all of which take a value.
const GLOBAL_FLAGS: [&str; 4] = ["--seed", "--threads", "--config", "--out"];

fn flag_tokens(table: &toml::Table, skip_tables: bool) -> CliResult<Vec<OsString>> {
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Table(_) if skip_tables => continue,
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<CliResult<Vec<_>>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            v => {
                out.push(flag.into());
                out.push(scalar(v)?.into());
            }
        }
    }
    Ok(out)
}

fn scalar(v: &toml::Value) -> CliResult<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(CliError::new(Kind::Parse, format!("config value {other} is not a scalar"))),
    }
}

/// Index of the subcommand token in `argv`.
fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let t = argv[i].to_string_lossy();
        if !t.starts_with('-') {
            return Some(i);
        }
        i += if GLOBAL_FLAGS.contains(&t.as_ref()) { 2 } else { 1 };
    }
    None
}

/// The `--config` path and subcommand name, found without a full parse
/// (required flags may still be missing at this point).
pub fn locate(argv: &[OsString]) -> Option<(std::path::PathBuf, String)> {
    let sub = subcommand_index(argv)?;
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        let t = argv[i].to_string_lossy();
        if t == "--config" {
            path = argv.get(i + 1).map(std::path::PathBuf::from);
            i += 1;
        } else if let Some(p) = t.strip_prefix("--config=") {
            path = Some(p.into());
        }
        i += 1;
    }
    Some((path?, argv[sub].to_string_lossy().into_owned()))
}

/// Rebuilds `argv` with the config file's flags placed before the user's,
/// so that explicit flags override them.
pub fn merge(argv: &[OsString], path: &Path, subcommand: &str) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::new(Kind::Parse, format!("{}: {e}", path.display())))?;
    for key in table.keys() {
        let flag = format!("--{}", key.replace('_', "-"));
        let is_table = table[key].is_table();
        if !is_table && !GLOBAL_FLAGS.contains(&flag.as_str()) {
            return Err(CliError::usage(format!("unknown global key '{key}' in {}", path.display())));
        }
    }
    if table.contains_key("config") {
        return Err(CliError::usage("a config file cannot name another config file"));
    }
    let sub = subcommand_index(argv).ok_or_else(|| CliError::usage("no subcommand given"))?;
    let mut out = vec![argv[0].clone()];
    out.extend(flag_tokens(&table, true)?);
    out.extend(argv[1..=sub].iter().cloned());
    if let Some(toml::Value::Table(t)) = table.get(subcommand) {
        out.extend(flag_tokens(t, false)?);
    }
    out.extend(argv[sub + 1..].iter().cloned());
    Ok(out)
}
