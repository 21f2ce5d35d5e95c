//! Provenance records attached to every output: tool version, input hashes
//! and the flags that influence the result.
//!
//! Worker counts and output locations are deliberately left out, so outputs
//! are byte-identical however they were produced.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Input name to lowercase hex SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub flags: BTreeMap<String, Value>,
}

impl Provenance {
    pub fn new(command: &'static str) -> Self {
        Provenance {
            tool: "hasopt",
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: BTreeMap::new(),
            flags: BTreeMap::new(),
        }
    }

    /// Reads `path`, records its hash under `name` and returns the bytes, so
    /// the hash always covers exactly what was parsed.
    pub fn read_input(&mut self, name: impl Into<String>, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(name.into(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn flag(&mut self, name: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("flag values serialize");
        self.flags.insert(name.to_string(), value);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Input name for a file: its file name, without the directory it was
/// found in.
pub fn input_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Serializes `value` as pretty JSON with a top-level `provenance` field.
pub fn to_json_with_provenance(value: impl Serialize, prov: &Provenance) -> Result<Vec<u8>> {
    let mut value = serde_json::to_value(value)?;
    match &mut value {
        Value::Object(map) => {
            map.insert("provenance".into(), serde_json::to_value(prov)?);
        }
        other => {
            let inner = std::mem::take(other);
            *other = serde_json::json!({ "data": inner, "provenance": prov });
        }
    }
    let mut out = serde_json::to_vec_pretty(&value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json(path: &Path, value: impl Serialize, prov: &Provenance) -> Result<()> {
    write_file(path, &to_json_with_provenance(value, prov)?)
}

/// Sidecar path for a CSV output: `<file>.provenance.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".provenance.json");
    PathBuf::from(name)
}

/// Writes CSV bytes and their provenance sidecar.
pub fn write_csv(path: &Path, bytes: &[u8], prov: &Provenance) -> Result<()> {
    write_file(path, bytes)?;
    let mut sidecar = serde_json::to_vec_pretty(prov)?;
    sidecar.push(b'\n');
    write_file(&sidecar_path(path), &sidecar)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn provenance_is_merged_into_objects() {
        let mut p = Provenance::new("test");
        p.flag("seed", 3);
        let out = to_json_with_provenance(serde_json::json!({ "a": 1 }), &p).unwrap();
        let v: Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["a"], 1);
        assert_eq!(v["provenance"]["flags"]["seed"], 3);
        let out = to_json_with_provenance([1, 2], &p).unwrap();
        let v: Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["data"][1], 2);
        assert_eq!(sidecar_path(Path::new("x/runs.csv")), Path::new("x/runs.csv.provenance.json"));
    }
}
