//! Layered run configuration: defaults, then an optional JSON config file,
//! then command-line flags. The resolved result is written next to the
//! outputs of every run.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

/// Bad flags or configuration; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    // A tagged enum switching variant is replaced whole.
                    Some(slot) if slot.is_object() && v.is_object() && same_tag(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, l) => *b = l,
    }
}

fn same_tag(a: &Value, b: &Value) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

/// Applies a (possibly partial) JSON object from `path` over `defaults`.
/// Unknown keys are rejected by the target type's deserializer.
pub fn layered<T: Serialize + DeserializeOwned>(defaults: T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(defaults);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let layer: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    if !layer.is_object() {
        return Err(usage(format!("config {}: expected a JSON object", path.display())));
    }
    let mut base = serde_json::to_value(defaults)?;
    merge(&mut base, layer);
    serde_json::from_value(base).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

pub fn write_resolved<T: Serialize>(out_dir: &Path, subcommand: &str, threads: usize, config: &T) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let doc = json!({
        "subcommand": subcommand,
        "threads": threads,
        "config": config,
    });
    let path = out_dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
