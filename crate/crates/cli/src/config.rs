//! Effective training config: built-in defaults, then a `key = value` file,
//! then command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hap::train::TrainConfig;
use serde_json::{Map, Value};

use crate::UsageError;

/// Parses the line-based config format. Blank lines and `#` comments are
/// skipped; values are JSON literals, comma lists, or bare strings.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, Value)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(UsageError(format!("config line {}: expected `key = value`", i + 1)));
        };
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            bail!(UsageError(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, parse_value(value.trim())));
    }
    Ok(out)
}

pub fn parse_value(s: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(s) {
        return v;
    }
    if s.contains(',') {
        return Value::Array(s.split(',').map(|p| parse_value(p.trim())).collect());
    }
    Value::String(s.to_string())
}

/// Applies `entries` over `base`; unknown keys are usage errors.
pub fn apply(base: &mut Map<String, Value>, entries: Vec<(String, Value)>, source: &str) -> Result<()> {
    for (key, value) in entries {
        match base.get_mut(&key) {
            Some(slot) => *slot = value,
            None => bail!(UsageError(format!("{source}: unknown config key `{key}`"))),
        }
    }
    Ok(())
}

/// Resolves the effective config from an optional file and flag overrides.
pub fn resolve(file: Option<&Path>, flags: Vec<(String, Value)>) -> Result<TrainConfig> {
    let mut map = match serde_json::to_value(TrainConfig::default())? {
        Value::Object(m) => m,
        _ => unreachable!("config serializes to an object"),
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        apply(&mut map, parse_config_text(&text)?, &path.display().to_string())?;
    }
    apply(&mut map, flags, "flags")?;
    let config: TrainConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| UsageError(format!("invalid config value: {e}")))?;
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}
