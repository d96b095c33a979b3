//! Stamped CSV and JSON writers, and the stamp reader used by `verify`.

use crate::config::RunConfig;
use crate::CliError;
use lattes_core::RationalMap;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const HASH_PREFIX: &str = "# config_hash=";
pub const CONFIG_PREFIX: &str = "# config=";

/// Hex SHA-256 of the map's canonical coefficient text.
pub fn map_hash(map: &RationalMap) -> String {
    hex::encode(Sha256::digest(map.canonical_text().as_bytes()))
}

/// CSV text with the config stamp and extra `#` header lines, then `columns`
/// and `rows`.
pub fn stamped_csv(config: &RunConfig, header: &[String], columns: &str, rows: &[String]) -> String {
    let mut s = String::new();
    writeln!(s, "{HASH_PREFIX}{}", config.hash()).unwrap();
    writeln!(s, "{CONFIG_PREFIX}{}", config.canonical_json()).unwrap();
    for h in header {
        writeln!(s, "# {h}").unwrap();
    }
    if !columns.is_empty() {
        writeln!(s, "{columns}").unwrap();
    }
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: String,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON object holding `config_hash`, `config` and the fields of `body`.
pub fn stamped_json<T: Serialize>(config: &RunConfig, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Stamped {
        config_hash: config.hash(),
        config,
        body,
    })
    .expect("output serializes");
    s.push('\n');
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// The `(hash, config JSON)` stamp embedded in an output file.
pub fn read_stamp(text: &str) -> Result<(String, serde_json::Value), CliError> {
    let missing = |what: &str| CliError::Verification(format!("no {what} found in file"));
    if text.trim_start().starts_with('{') {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Verification(format!("invalid JSON: {e}")))?;
        let hash = value
            .get("config_hash")
            .and_then(|h| h.as_str())
            .ok_or_else(|| missing("config_hash"))?
            .to_string();
        let config = value.get("config").cloned().ok_or_else(|| missing("config"))?;
        return Ok((hash, config));
    }
    let line = |prefix: &str| text.lines().find_map(|l| l.strip_prefix(prefix));
    let hash = line(HASH_PREFIX).ok_or_else(|| missing("config_hash line"))?.trim().to_string();
    let config = line(CONFIG_PREFIX).ok_or_else(|| missing("config line"))?;
    let config = serde_json::from_str(config).map_err(|e| CliError::Verification(format!("invalid config JSON: {e}")))?;
    Ok((hash, config))
}

/// Comma-joined shortest round-trip floats.
pub fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
