//! Run manifests and JSON reports.

use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds to 6 significant digits so reports diff cleanly.
pub fn sig6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

/// Applies [`sig6`] to every floating-point number in a JSON tree.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(sig6(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serializes `value` with floats rounded to 6 significant digits.
pub fn to_report_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileStatus {
    pub path: PathBuf,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FileStatus {
    pub fn ok(path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            status: "ok",
            error: None,
        }
    }

    pub fn failed(path: &Path, err: impl ToString) -> Self {
        Self {
            path: path.to_path_buf(),
            status: "failed",
            error: Some(err.to_string()),
        }
    }
}

/// One per run; written as `manifest.json` in the output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    /// Effective configuration in the flat `section.key = value` form.
    pub config: String,
    pub inputs: Vec<FileStatus>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: String) -> Self {
        Self {
            command: command.to_string(),
            tool_version: TOOL_VERSION,
            config,
            inputs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            duration_seconds: 0.0,
        }
    }

    pub fn failures(&self) -> usize {
        self.inputs.iter().filter(|f| f.status != "ok").count()
    }
}
