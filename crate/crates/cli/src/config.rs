//! Flat `key = value` configuration files. Keys mirror long flag names with
//! `-` or `_`; command-line flags win over file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Failure, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "assertion-url",
    "cache",
    "condensed",
    "corpus",
    "endpoint",
    "fallback-rules",
    "fb-docs",
    "fb-terms",
    "fields",
    "format",
    "include-mesh",
    "index",
    "k",
    "keywords",
    "lambda",
    "measures",
    "mode",
    "model",
    "name",
    "negation-triggers",
    "out",
    "prompts",
    "qrels",
    "queries",
    "rm3",
    "rpm",
    "scrub-clinical-trial",
    "scrub-triggers",
    "speculation-triggers",
    "stopwords",
    "strategy",
    "system-role",
    "timeout",
    "topics",
    "variant",
];

/// Keys whose values are paths, resolved against the config file's directory.
const PATH_KEYS: &[&str] = &[
    "cache",
    "corpus",
    "index",
    "keywords",
    "negation-triggers",
    "out",
    "prompts",
    "qrels",
    "queries",
    "speculation-triggers",
    "stopwords",
    "topics",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|f| f.context(path.display()))
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Failure::config(format!("line {}: expected key = value", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Failure::config(format!("line {}: unknown key '{}'", i + 1, k.trim())));
            }
            let v = v.trim();
            let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
            if values.insert(key, v.to_string()).is_some() {
                return Err(Failure::config(format!("line {}: duplicate key '{}'", i + 1, k.trim())));
            }
        }
        Ok(FileConfig { values, base })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else the parsed file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| Failure::config(format!("config key '{key}': {e}"))))
            .transpose()
    }

    pub fn pick_bool(&self, flag: Option<bool>, key: &str, default: bool) -> Result<bool> {
        if let Some(b) = flag {
            return Ok(b);
        }
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(Failure::config(format!("config key '{key}': expected a boolean, got '{v}'"))),
            },
        }
    }

    pub fn pick_path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        debug_assert!(PATH_KEYS.contains(&key));
        flag.or_else(|| self.raw(key).map(|v| self.base.join(v)))
    }

    pub fn require_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.pick_path(flag, key).ok_or_else(|| Failure::config(format!("--{key} is required (flag or config key)")))
    }

    /// Comma-separated list from a flag list or a file value.
    pub fn pick_list(&self, flag: Vec<String>, key: &str) -> Vec<String> {
        let items = if flag.is_empty() { self.raw(key).map(|v| vec![v.to_string()]).unwrap_or_default() } else { flag };
        items.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    }

    /// Path list: flags as given, or comma-separated file paths.
    pub fn pick_paths(&self, flag: Vec<PathBuf>, key: &str) -> Vec<PathBuf> {
        if !flag.is_empty() {
            return flag;
        }
        self.pick_list(Vec::new(), key).into_iter().map(|p| self.base.join(p)).collect()
    }
}
