use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use super::{format_sig9, round_sig9};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one command run: enough to regenerate its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    pub started_utc: String,
    pub finished_utc: Option<String>,
    pub outputs: Vec<FileDigest>,
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// UTC timestamp, pinned by `SOURCE_DATE_EPOCH` when set.
fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|t| chrono::DateTime::from_timestamp(t, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

impl RunManifest {
    pub fn new<S: Into<String>>(
        command: impl IntoIterator<Item = S>,
        config: &impl Serialize,
    ) -> Result<Self> {
        let config = serde_json::to_value(config)
            .map_err(|e| Error::invalid(format!("configuration is not serializable: {e}")))?;
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into_iter().map(Into::into).collect(),
            config,
            inputs: Vec::new(),
            seeds: Vec::new(),
            started_utc: timestamp(),
            finished_utc: None,
            outputs: Vec::new(),
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn add_seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        let path = path.display().to_string();
        self.outputs.retain(|d| d.path != path);
        self.outputs.push(FileDigest { path, sha256 });
        Ok(())
    }

    /// Writes the manifest next to `out` and returns its path.
    pub fn write_sidecar(&mut self, out: &Path) -> Result<PathBuf> {
        self.finished_utc = Some(timestamp());
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Rounds every float in a JSON tree to nine significant digits.
pub fn round_json(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig9(n.as_f64().expect("f64"));
            Number::from_f64(x)
                .map(Value::Number)
                .unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Serializes `value` to `path` as pretty JSON with a leading `manifest`
/// field naming the sidecar, then writes the sidecar.
pub fn emit_json(path: &Path, value: &impl Serialize, manifest: &mut RunManifest) -> Result<()> {
    let value = serde_json::to_value(value)
        .map_err(|e| Error::computation(format!("result is not serializable: {e}")))?;
    let mut out = Map::new();
    out.insert(
        "manifest".into(),
        Value::String(file_name(&manifest_path(path))),
    );
    match round_json(value) {
        Value::Object(fields) => out.extend(fields),
        other => {
            out.insert("result".into(), other);
        }
    }
    let text =
        serde_json::to_string_pretty(&Value::Object(out)).expect("JSON value serializes") + "\n";
    std::fs::write(path, text).map_err(|e| io_error(path, e))?;
    manifest.record_output(path)?;
    manifest.write_sidecar(path)?;
    Ok(())
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.headers.len(),
            "row width differs from header"
        );
        self.rows.push(row);
    }

    /// CSV text; the header row is omitted when there are no headers.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        if !self.headers.is_empty() {
            w.write_record(&self.headers).expect("write to memory");
        }
        for row in &self.rows {
            w.write_record(row.iter().map(|&x| format_sig9(x)))
                .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("ASCII output")
    }
}

pub fn emit_csv(path: &Path, table: &CsvTable, manifest: &mut RunManifest) -> Result<()> {
    std::fs::write(path, table.to_csv()).map_err(|e| io_error(path, e))?;
    manifest.record_output(path)?;
    manifest.write_sidecar(path)?;
    Ok(())
}
