//! Content-addressed, persistent embedding cache.
//!
//! The cache file is line-delimited text. Each record is
//!
//! ```text
//! <key: 64 lowercase hex chars> <dimension> <v0>,<v1>,...,<v{dimension-1}>
//! ```
//!
//! separated by single spaces and terminated by `\n`. Lines starting with `#`
//! are comments. Values are written in the shortest decimal form that parses
//! back to the same `f64`, so cached vectors are bit-identical to fresh ones.
//!
//! The key is the SHA-256 of a length-prefixed encoding of the request:
//!
//! ```text
//! "commscore-cache-v1" NUL kind NUL field*
//! field := <byte length in decimal> ":" <utf-8 bytes>
//! ```
//!
//! where `kind` is `plain` (fields: provider name, text) or `contextual`
//! (fields: provider name, number of context sentences, each context
//! sentence, target sentence). See [`CacheKey`].

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::{ContextualRequest, EmbeddingError, EmbeddingProvider, EmbeddingVector};

const KEY_DOMAIN: &[u8] = b"commscore-cache-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    fn digest(kind: &str, fields: &[&str]) -> Self {
        let mut h = Sha256::new();
        h.update(KEY_DOMAIN);
        h.update([0]);
        h.update(kind.as_bytes());
        h.update([0]);
        for f in fields {
            h.update(f.len().to_string().as_bytes());
            h.update(b":");
            h.update(f.as_bytes());
        }
        Self(h.finalize().into())
    }

    pub fn plain(provider: &str, text: &str) -> Self {
        Self::digest("plain", &[provider, text])
    }

    pub fn contextual(provider: &str, req: &ContextualRequest) -> Self {
        let count = req.context_sentences.len().to_string();
        let mut fields = vec![provider, count.as_str()];
        fields.extend(req.context_sentences.iter().map(String::as_str));
        fields.push(&req.target_sentence);
        Self::digest("contextual", &fields)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

fn format_record(key: &CacheKey, v: &EmbeddingVector) -> String {
    let values: Vec<String> = v.values().iter().map(|x| format!("{x}")).collect();
    format!("{} {} {}\n", key, v.dimension(), values.join(","))
}

fn parse_record(line: &str) -> Option<(CacheKey, EmbeddingVector)> {
    let mut parts = line.split(' ');
    let key = CacheKey::from_hex(parts.next()?)?;
    let dimension: usize = parts.next()?.parse().ok()?;
    let values: Vec<f64> = parts
        .next()?
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .ok()?;
    if parts.next().is_some() || values.len() != dimension {
        return None;
    }
    Some((key, EmbeddingVector::new(values).ok()?))
}

/// Memoizing decorator. Results are bit-identical to the wrapped provider.
///
/// Reads proceed concurrently; inserts and file appends are serialized.
pub struct CachedProvider<P> {
    inner: P,
    path: Option<PathBuf>,
    entries: RwLock<HashMap<CacheKey, EmbeddingVector>>,
    file: Mutex<Option<File>>,
    skipped_records: usize,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn in_memory(inner: P) -> Self {
        Self {
            inner,
            path: None,
            entries: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
            skipped_records: 0,
        }
    }

    /// Opens (or creates) the cache file at `path`, loading existing records.
    /// Malformed records, e.g. a line truncated by a crash, are skipped.
    pub fn open(inner: P, path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref().to_path_buf();
        let io = |e: std::io::Error| EmbeddingError::Cache(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut entries = HashMap::new();
        let mut skipped_records = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for line in reader.lines() {
                let line = line.map_err(io)?;
                let line = line.trim_end_matches('\r');
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                match parse_record(line) {
                    Some((k, v)) => {
                        entries.insert(k, v);
                    }
                    None => skipped_records += 1,
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        // A previous run may have died mid-line; start ours on a fresh one.
        if skipped_records > 0 {
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(Self {
            inner,
            path: Some(path),
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
            skipped_records,
        })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn skipped_records(&self) -> usize {
        self.skipped_records
    }

    fn lookup(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .cloned()
    }

    fn store(&self, key: CacheKey, v: &EmbeddingVector) -> Result<(), EmbeddingError> {
        let mut file = self.file.lock().expect("cache file lock poisoned");
        let fresh = self
            .entries
            .write()
            .expect("cache lock poisoned")
            .insert(key, v.clone())
            .is_none();
        if let (true, Some(f)) = (fresh, file.as_mut()) {
            f.write_all(format_record(&key, v).as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| EmbeddingError::Cache(e.to_string()))?;
        }
        Ok(())
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn supports_contextual(&self) -> bool {
        self.inner.supports_contextual()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let key = CacheKey::plain(self.inner.name(), text);
        if let Some(v) = self.lookup(&key) {
            return Ok(v);
        }
        let v = self.inner.embed(text)?;
        self.store(key, &v)?;
        Ok(v)
    }

    fn embed_contextual(&self, req: &ContextualRequest) -> Result<EmbeddingVector, EmbeddingError> {
        let key = CacheKey::contextual(self.inner.name(), req);
        if let Some(v) = self.lookup(&key) {
            return Ok(v);
        }
        let v = self.inner.embed_contextual(req)?;
        self.store(key, &v)?;
        Ok(v)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let keys: Vec<CacheKey> = texts
            .iter()
            .map(|t| CacheKey::plain(self.inner.name(), t))
            .collect();
        let mut out: Vec<Option<EmbeddingVector>> = keys.iter().map(|k| self.lookup(k)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let fresh = self.inner.embed_batch(&batch).map_err(|e| match e {
                EmbeddingError::Batch { failures } => EmbeddingError::Batch {
                    failures: failures
                        .into_iter()
                        .map(|(pos, err)| (missing.get(pos).copied().unwrap_or(pos), err))
                        .collect(),
                },
                other => other,
            })?;
            for (&i, v) in missing.iter().zip(fresh) {
                self.store(keys[i], &v)?;
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}
