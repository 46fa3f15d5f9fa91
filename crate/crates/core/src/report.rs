//! Run reports: one pretty-printed JSON document per run, carrying
//! `schema_version`, the tool version, the effective configuration and the
//! SHA-256 of every input file. Only `generated_at` varies between reruns.

use std::fs;
use std::path::Path;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const TIMESTAMP_KEY: &str = "generated_at";

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(role: &str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(InputDigest {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct Report<C: Serialize, B: Serialize> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub generated_at: String,
    pub config: C,
    pub inputs: Vec<InputDigest>,
    pub notes: Vec<String>,
    pub result: B,
}

impl<C: Serialize, B: Serialize> Report<C, B> {
    pub fn new(command: &'static str, config: C, inputs: Vec<InputDigest>, result: B) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: "sinkfrac",
            version: crate::VERSION,
            command,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config,
            inputs,
            notes: Vec::new(),
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_json())
    }
}

/// Removes the top-level timestamp line so reruns can be compared byte for byte.
pub fn strip_timestamp(json: &str) -> String {
    let key = format!("\"{TIMESTAMP_KEY}\":");
    json.lines()
        .filter(|l| !l.trim_start().starts_with(&key))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Finite values as numbers; infinities as `"+inf"` / `"-inf"`, NaN as `"nan"`.
pub fn float_or_label<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("+inf")
    } else {
        s.serialize_str("-inf")
    }
}
