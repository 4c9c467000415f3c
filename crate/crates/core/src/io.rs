//! CSV and JSON emission. Every file starts with the SHA-256 of the resolved
//! configuration and the seed so results can be matched to the run that made
//! them. Floats are written in shortest round-trip form; non-finite values are
//! rejected.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};

/// Identity of a run, echoed into every output header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunStamp {
    pub config_sha256: String,
    pub seed: u64,
}

impl RunStamp {
    pub fn of(config: &RunConfig) -> Self {
        Self { config_sha256: config_hash(config), seed: config.seed }
    }
}

pub fn config_hash(config: &RunConfig) -> String {
    Sha256::digest(config.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io { path: "<output>".into(), source: e }
}

/// Writes a CSV table. Empty `rows` produce the header only.
pub fn emit_csv<W: Write>(out: &mut W, stamp: &RunStamp, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    for (r, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::Mismatch(format!("row {r} has {} fields, header has {}", row.len(), columns.len())));
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("row {r}, column `{}`", columns[c])));
        }
    }
    writeln!(out, "# config_sha256={} seed={}", stamp.config_sha256, stamp.seed).map_err(io_err)?;
    writeln!(out, "{}", columns.join(",")).map_err(io_err)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(io_err)?;
    }
    Ok(())
}

fn find_non_finite(v: &Value, path: &str) -> Option<String> {
    match v {
        // serde_json maps NaN and infinities to null
        Value::Null => Some(path.to_string()),
        Value::Array(items) => items.iter().enumerate().find_map(|(i, x)| find_non_finite(x, &format!("{path}[{i}]"))),
        Value::Object(map) => map.iter().find_map(|(k, x)| find_non_finite(x, &format!("{path}.{k}"))),
        _ => None,
    }
}

/// Serialises `value`, rejecting any `null` (a NaN or infinity on the way in).
pub fn finite_value<T: Serialize>(value: &T, root: &str) -> Result<Value> {
    let v = serde_json::to_value(value).map_err(|e| Error::Mismatch(e.to_string()))?;
    match find_non_finite(&v, root) {
        Some(path) => Err(Error::NonFinite(path)),
        None => Ok(v),
    }
}

/// JSON document `{"config_sha256", "seed", "config", "result"}`.
///
/// `null` anywhere in the result is treated as a non-finite float.
pub fn json_document<T: Serialize>(config: &RunConfig, result: &T) -> Result<Value> {
    let result = finite_value(result, "result")?;
    let stamp = RunStamp::of(config);
    let config = serde_json::to_value(config).map_err(|e| Error::Mismatch(e.to_string()))?;
    Ok(json!({ "config_sha256": stamp.config_sha256, "seed": stamp.seed, "config": config, "result": result }))
}

pub fn emit_json<W: Write, T: Serialize>(out: &mut W, config: &RunConfig, result: &T) -> Result<()> {
    let doc = json_document(config, result)?;
    serde_json::to_writer_pretty(&mut *out, &doc).map_err(|e| Error::Mismatch(e.to_string()))?;
    writeln!(out).map_err(io_err)
}

/// Writes to `path` through a buffer; I/O failures carry the path.
pub fn write_file(path: &std::path::Path, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    std::fs::write(path, buf).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
