//! Config file loading and `--set key=value` overrides.
//!
//! Precedence is exactly file < override. Overrides go through the same
//! strict deserialization as the file, so unknown keys are rejected by name
//! rather than silently ignored.

use std::fs;
use std::path::Path;

use hgnn_ima::trainer::RunConfig;

use crate::CliError;

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::user("IO", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::user("CONFIG", format!("bad config {}: {e}", p.display()))
            })
        }
    }
}

/// Applies `key=value` pairs on top of a config. Values parse as JSON when
/// possible (numbers, booleans, arrays, null) and as strings otherwise.
pub fn apply_overrides(cfg: &RunConfig, sets: &[String]) -> Result<RunConfig, CliError> {
    if sets.is_empty() {
        return Ok(cfg.clone());
    }
    let mut value = serde_json::to_value(cfg)
        .map_err(|e| CliError::user("CONFIG", format!("config serialization failed: {e}")))?;
    let map = value
        .as_object_mut()
        .expect("RunConfig serializes to an object");
    for pair in sets {
        let (key, raw) = pair.split_once('=').ok_or_else(|| {
            CliError::user("CONFIG", format!("override {pair:?} is not of the form key=value"))
        })?;
        if !map.contains_key(key) {
            return Err(CliError::user(
                "CONFIG",
                format!("unknown config key {key:?}"),
            ));
        }
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        map.insert(key.to_string(), parsed);
    }
    serde_json::from_value(value)
        .map_err(|e| CliError::user("CONFIG", format!("bad override value: {e}")))
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::user("CONFIG", format!("bad seed {s:?}")))
        })
        .collect()
}
