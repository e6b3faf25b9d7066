use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::GatewayError;
use crate::prompts::{DecodingParams, Message};

/// SHA-256 (lowercase hex) of the canonical request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn compute(model: &str, params: &DecodingParams, messages: &[Message]) -> Self {
        Self::of_canonical(&canonical_request(model, params, messages))
    }

    fn of_canonical(canonical: &str) -> Self {
        CacheKey(hex::encode(Sha256::digest(canonical.as_bytes())))
    }

    pub fn parse(s: &str) -> Option<Self> {
        let ok = s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| CacheKey(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The request as a JSON value with the layout
/// `{"messages":[{"content":..,"role":..}..],"model":..,"params":{"frequency_penalty":..,"presence_penalty":..,"temperature":..}}`.
pub fn canonical_value(model: &str, params: &DecodingParams, messages: &[Message]) -> Value {
    json!({
        "messages": messages,
        "model": model,
        "params": {
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
            "temperature": params.temperature,
        },
    })
}

/// Compact UTF-8 JSON with object keys sorted bytewise and no whitespace.
pub fn canonical_request(model: &str, params: &DecodingParams, messages: &[Message]) -> String {
    // serde_json's default map is ordered by key, so to_string is canonical.
    canonical_value(model, params, messages).to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedExchange {
    pub key: CacheKey,
    /// Canonical request value (see [`canonical_value`]).
    pub request: Value,
    /// Assistant message content exactly as returned.
    pub response_text: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default)]
    pub provider_metadata: BTreeMap<String, Value>,
}

impl CachedExchange {
    pub fn new(
        model: &str,
        params: &DecodingParams,
        messages: &[Message],
        response_text: String,
        timestamp: u64,
    ) -> Self {
        let request = canonical_value(model, params, messages);
        CachedExchange {
            key: CacheKey::of_canonical(&request.to_string()),
            request,
            response_text,
            timestamp,
            provider_metadata: BTreeMap::new(),
        }
    }

    /// Recomputes the key from the stored request.
    pub fn verify_key(&self) -> bool {
        CacheKey::of_canonical(&self.request.to_string()) == self.key
    }
}

/// Content-addressed store: `<root>/<first two hex>/<digest>.json`, plus
/// `<root>/index.tsv` with `digest<TAB>timestamp<TAB>model` lines.
#[derive(Debug)]
pub struct ResponseCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

pub const INDEX_FILE: &str = "index.tsv";

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| cache_err(&root, e))?;
        Ok(ResponseCache { root, write_lock: Mutex::new(()) })
    }

    /// Opens an existing cache without creating anything on disk.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(GatewayError::Cache(format!("{}: cache directory does not exist", root.display())));
        }
        Ok(ResponseCache { root, write_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CachedExchange>, GatewayError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let ex: CachedExchange =
            serde_json::from_str(&text).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        if &ex.key != key {
            return Err(GatewayError::Cache(format!(
                "{}: stored key {} does not match file name",
                path.display(),
                ex.key
            )));
        }
        Ok(Some(ex))
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.path_for(key).is_file()
    }

    /// Atomically writes one exchange (temp file then rename) and appends it to the index.
    pub fn put(&self, ex: &CachedExchange) -> Result<(), GatewayError> {
        self.put_all(std::slice::from_ref(ex))
    }

    /// Writes several exchanges under one lock acquisition.
    pub fn put_all(&self, exchanges: &[CachedExchange]) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut index_lines = String::new();
        for ex in exchanges {
            let path = self.path_for(&ex.key);
            let dir = path.parent().expect("cache path has a parent");
            fs::create_dir_all(dir).map_err(|e| cache_err(dir, e))?;
            let mut body = serde_json::to_string_pretty(ex).expect("exchange serializes");
            body.push('\n');
            // Re-recording an identical exchange leaves file and index alone.
            if fs::read(&path).is_ok_and(|old| old == body.as_bytes()) {
                continue;
            }
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| cache_err(dir, e))?;
            tmp.write_all(body.as_bytes()).map_err(|e| cache_err(&path, e))?;
            tmp.persist(&path).map_err(|e| cache_err(&path, e.error))?;
            let model = ex.request.get("model").and_then(Value::as_str).unwrap_or("");
            index_lines.push_str(&format!("{}\t{}\t{}\n", ex.key, ex.timestamp, model));
        }
        if index_lines.is_empty() {
            return Ok(());
        }
        let index = self.root.join(INDEX_FILE);
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&index).map_err(|e| cache_err(&index, e))?;
        f.write_all(index_lines.as_bytes()).map_err(|e| cache_err(&index, e))?;
        Ok(())
    }

    /// Every stored exchange key, sorted.
    pub fn keys(&self) -> Result<Vec<CacheKey>, GatewayError> {
        let mut keys = Vec::new();
        for entry in walkdir::WalkDir::new(&self.root).min_depth(2).max_depth(2) {
            let entry = entry.map_err(|e| GatewayError::Cache(e.to_string()))?;
            let name = entry.file_name().to_string_lossy();
            if let Some(key) = name.strip_suffix(".json").and_then(CacheKey::parse) {
                keys.push(key);
            }
        }
        keys.sort();
        Ok(keys)
    }

    /// Checks every file: parseable, key matches content and file name, and
    /// listed in the index. Returns one problem description per defect.
    pub fn verify(&self) -> Result<Vec<String>, GatewayError> {
        let indexed = self.indexed_keys()?;
        let mut problems = Vec::new();
        for key in self.keys()? {
            match self.get(&key) {
                Ok(Some(ex)) if !ex.verify_key() => problems.push(format!("{key}: request does not hash to its key")),
                Ok(Some(_)) => {}
                Ok(None) => problems.push(format!("{key}: vanished during verification")),
                Err(e) => problems.push(e.to_string()),
            }
            if !indexed.contains(&key) {
                problems.push(format!("{key}: missing from {INDEX_FILE}"));
            }
        }
        for key in &indexed {
            if !self.contains(key) {
                problems.push(format!("{key}: listed in {INDEX_FILE} but no file"));
            }
        }
        Ok(problems)
    }

    fn indexed_keys(&self) -> Result<HashSet<CacheKey>, GatewayError> {
        let path = self.root.join(INDEX_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(cache_err(&path, e)),
        };
        Ok(text.lines().filter_map(|l| l.split('\t').next()).filter_map(CacheKey::parse).collect())
    }

    /// Removes stray temp files, corrupt entries and, when `keep` is given,
    /// every entry not in it; then rewrites the index. Returns removed paths.
    pub fn gc(&self, keep: Option<&HashSet<CacheKey>>) -> Result<Vec<PathBuf>, GatewayError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut removed = Vec::new();
        let mut live: Vec<CachedExchange> = Vec::new();
        for entry in walkdir::WalkDir::new(&self.root).min_depth(2).max_depth(2) {
            let entry = entry.map_err(|e| GatewayError::Cache(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let path = entry.path().to_path_buf();
            let name = entry.file_name().to_string_lossy().to_string();
            let keep_it = match name.strip_suffix(".json").and_then(CacheKey::parse) {
                Some(key) => match self.get(&key) {
                    Ok(Some(ex)) if ex.verify_key() && keep.is_none_or(|k| k.contains(&key)) => {
                        live.push(ex);
                        true
                    }
                    _ => false,
                },
                None => false,
            };
            if !keep_it {
                fs::remove_file(&path).map_err(|e| cache_err(&path, e))?;
                removed.push(path);
            }
        }
        live.sort_by(|a, b| a.key.cmp(&b.key));
        let index: String = live
            .iter()
            .map(|ex| {
                let model = ex.request.get("model").and_then(Value::as_str).unwrap_or("");
                format!("{}\t{}\t{}\n", ex.key, ex.timestamp, model)
            })
            .collect();
        let path = self.root.join(INDEX_FILE);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(|e| cache_err(&self.root, e))?;
        tmp.write_all(index.as_bytes()).map_err(|e| cache_err(&path, e))?;
        tmp.persist(&path).map_err(|e| cache_err(&path, e.error))?;
        removed.sort();
        Ok(removed)
    }
}

fn cache_err(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::Cache(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DecodingParams {
        DecodingParams { temperature: 0.0, frequency_penalty: 1.5, presence_penalty: 1.0 }
    }

    #[test]
    fn canonical_layout() {
        let s = canonical_request("m", &params(), &[Message::system("S"), Message::user("U \"q\"")]);
        assert_eq!(
            s,
            r#"{"messages":[{"content":"S","role":"system"},{"content":"U \"q\"","role":"user"}],"model":"m","params":{"frequency_penalty":1.5,"presence_penalty":1.0,"temperature":0.0}}"#
        );
    }

    #[test]
    fn put_get_verify_gc() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let ex =
            CachedExchange::new("m", &params(), &[Message::system("s"), Message::user("u")], "  reply\n".into(), 7);
        cache.put(&ex).unwrap();
        assert_eq!(cache.get(&ex.key).unwrap().unwrap(), ex);
        assert_eq!(cache.keys().unwrap(), vec![ex.key.clone()]);
        assert!(cache.verify().unwrap().is_empty());

        std::fs::write(dir.path().join("ab").join("junk.tmp"), "x").ok();
        let other = CachedExchange::new("m", &params(), &[Message::system("s"), Message::user("v")], "r".into(), 8);
        cache.put(&other).unwrap();
        let keep: HashSet<CacheKey> = [ex.key.clone()].into();
        let removed = cache.gc(Some(&keep)).unwrap();
        assert!(removed.iter().any(|p| p.ends_with(format!("{}.json", other.key))));
        assert!(cache.contains(&ex.key) && !cache.contains(&other.key));
        assert!(cache.verify().unwrap().is_empty());
    }

    #[test]
    fn tampered_entry_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let mut ex = CachedExchange::new("m", &params(), &[Message::system("s")], "r".into(), 1);
        ex.request["model"] = Value::String("other".into());
        cache.put(&ex).unwrap();
        assert_eq!(cache.verify().unwrap().len(), 1);
    }
}
