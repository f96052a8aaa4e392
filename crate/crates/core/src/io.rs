//! Artifact plumbing: key=value configs, JSON checkpoints, JSON-lines
//! metrics, and the config hash stamped into every output.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "QRF_OUTPUT_ROOT";

pub const CHECKPOINT_VERSION: u32 = 1;

/// Flat `key = value` configuration. Blank lines and `#` comments are
/// ignored; later assignments win.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{}`", n + 1, raw.trim())))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            c.set(k, v.trim());
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))?;
        parse_value(key, v)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.get(key) {
            Some(v) => parse_value(key, v),
            None => Ok(default),
        }
    }

    /// Comma-separated list, or `default` when the key is absent.
    pub fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.split(',').map(|s| parse_value(key, s.trim())).collect(),
        }
    }

    /// Canonical text: sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Fails on any key not in `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse().map_err(|e| Error::Config(format!("bad value `{v}` for `{key}`: {e}")))
}

/// Resolves an output directory: relative paths go under `$QRF_OUTPUT_ROOT`
/// when it is set.
pub fn output_dir(dir: &str) -> PathBuf {
    let p = PathBuf::from(dir);
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p,
    }
}

/// Provenance stamped into artifacts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn meta(&self) -> Vec<(&'static str, String)> {
        vec![("config_hash", self.config_hash.clone()), ("seed", self.seed.to_string())]
    }
}

/// JSON for a float; non-finite values become the strings `"inf"`,
/// `"-inf"` and `"nan"`.
pub fn float_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Saved training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    /// Iterations completed.
    pub iteration: usize,
    pub params: Vec<f64>,
    pub velocity: Vec<f64>,
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let found = v
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Config("checkpoint has no format_version".into()))?;
        if found != CHECKPOINT_VERSION as u64 {
            return Err(Error::UnsupportedVersion { found: found as u32, expected: CHECKPOINT_VERSION });
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn config(&self) -> Config {
        let mut c = Config::new();
        for (k, v) in &self.config {
            c.set(k, v.clone());
        }
        c
    }
}

/// One JSON object per line, each carrying the stamp.
pub struct JsonLines {
    out: BufWriter<fs::File>,
    stamp: Stamp,
}

impl JsonLines {
    pub fn create(path: &Path, stamp: Stamp) -> Result<Self> {
        Ok(JsonLines { out: BufWriter::new(fs::File::create(path)?), stamp })
    }

    pub fn write(&mut self, mut record: serde_json::Map<String, Value>) -> Result<()> {
        record.insert("config_hash".into(), json!(self.stamp.config_hash));
        record.insert("seed".into(), json!(self.stamp.seed));
        serde_json::to_writer(&mut self.out, &record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Energies from a JSON array or from numbers separated by commas,
/// whitespace or newlines.
pub fn read_energies(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read energy file {}: {e}", path.display())))?;
    let t = text.trim_start();
    if t.starts_with('[') {
        return Ok(serde_json::from_str(t)?);
    }
    t.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("bad energy `{s}`: {e}"))))
        .collect()
}
