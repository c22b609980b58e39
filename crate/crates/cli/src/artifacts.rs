//! Output files: every artifact starts with the config hash and seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::LoadedConfig;
use crate::error::CliError;

pub fn header_line(hash: &str, seed: u64) -> String {
    format!("# config_hash={hash} seed={seed}\n")
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

/// Writes a delimited table behind a `#` header line.
pub fn write_table<F, E>(cfg: &LoadedConfig, path: &Path, body: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), E>,
    E: std::fmt::Display,
{
    ensure_parent(path)?;
    let mut buf = header_line(&cfg.hash, cfg.seed()).into_bytes();
    body(&mut buf).map_err(|e| CliError::io(path, e))?;
    fs::write(path, buf).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes a pretty JSON report with `config_hash` and `seed` fields.
pub fn write_json<T: Serialize>(cfg: &LoadedConfig, path: &Path, report: &T) -> Result<PathBuf, CliError> {
    ensure_parent(path)?;
    let mut value = serde_json::to_value(report).map_err(|e| CliError::io(path, e))?;
    let value = match value {
        Value::Object(ref mut map) => {
            map.insert("config_hash".into(), Value::String(cfg.hash.clone()));
            map.insert("seed".into(), Value::from(cfg.seed()));
            value
        }
        other => serde_json::json!({ "config_hash": cfg.hash, "seed": cfg.seed(), "report": other }),
    };
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Fails with `UpstreamMissing` unless `path` was produced earlier.
pub fn require(stage: &'static str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::UpstreamMissing { stage, path: path.to_path_buf() })
    }
}

pub fn open(stage: &'static str, path: &Path) -> Result<fs::File, CliError> {
    require(stage, path)?;
    fs::File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, CliError> {
    require(stage, path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
}
