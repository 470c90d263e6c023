//! Append-only JSON-lines cache of generated descriptions, keyed by prompt hash.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub query_id: String,
    pub model: String,
    pub prompt_hash: String,
    pub description: String,
    #[serde(default)]
    pub stages: BTreeMap<String, String>,
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cache i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses cache file contents. Later entries for the same prompt hash win.
///
/// A final line without a trailing newline that fails to parse is treated as
/// an interrupted append and dropped with a warning.
pub fn parse_cache(text: &str) -> Result<Vec<CacheEntry>, CacheError> {
    let mut out = Vec::new();
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(line) {
            Ok(e) if e.description.trim().is_empty() => {
                return Err(CacheError::Parse {
                    line: i + 1,
                    message: "empty description".into(),
                })
            }
            Ok(e) => out.push(e),
            Err(_) if i + 1 == lines.len() && !complete => {
                log::warn!("cache line {}: dropping incomplete trailing entry", i + 1);
            }
            Err(err) => {
                return Err(CacheError::Parse {
                    line: i + 1,
                    message: err.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Description cache: an immutable snapshot loaded at open plus entries
/// appended during this session.
#[derive(Debug)]
pub struct DescriptionCache {
    path: Option<PathBuf>,
    snapshot: HashMap<String, CacheEntry>,
    snapshot_order: Vec<String>,
    session: RwLock<SessionEntries>,
    writer: Mutex<Option<File>>,
}

#[derive(Debug, Default)]
struct SessionEntries {
    by_hash: HashMap<String, CacheEntry>,
    order: Vec<String>,
}

impl DescriptionCache {
    /// Opens (or lazily creates) the cache at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let entries = match std::fs::read_to_string(&path) {
            Ok(text) => parse_cache(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let mut cache = Self::from_entries(entries);
        cache.path = Some(path);
        Ok(cache)
    }

    /// A cache that never touches the filesystem.
    pub fn in_memory() -> Self {
        Self::from_entries(Vec::new())
    }

    fn from_entries(entries: Vec<CacheEntry>) -> Self {
        let mut snapshot = HashMap::new();
        let mut snapshot_order = Vec::new();
        for e in entries {
            if snapshot.contains_key(&e.prompt_hash) {
                snapshot_order.retain(|h| h != &e.prompt_hash);
            }
            snapshot_order.push(e.prompt_hash.clone());
            snapshot.insert(e.prompt_hash.clone(), e);
        }
        Self {
            path: None,
            snapshot,
            snapshot_order,
            session: RwLock::new(SessionEntries::default()),
            writer: Mutex::new(None),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, prompt_hash: &str) -> Option<CacheEntry> {
        let session = self.session.read().expect("cache lock poisoned");
        session
            .by_hash
            .get(prompt_hash)
            .or_else(|| self.snapshot.get(prompt_hash))
            .cloned()
    }

    /// Appends `entry`, writing it through to disk before returning.
    pub fn append(&self, entry: CacheEntry) -> Result<(), CacheError> {
        let mut line = serde_json::to_string(&entry).expect("cache entries serialize");
        line.push('\n');
        {
            let mut writer = self.writer.lock().expect("cache writer poisoned");
            if let Some(path) = &self.path {
                let io = |source| CacheError::Io {
                    path: path.display().to_string(),
                    source,
                };
                if writer.is_none() {
                    let f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
                    *writer = Some(f);
                }
                let f = writer.as_mut().expect("opened above");
                f.write_all(line.as_bytes()).map_err(io)?;
                f.flush().map_err(io)?;
            }
        }
        let mut session = self.session.write().expect("cache lock poisoned");
        if session.by_hash.contains_key(&entry.prompt_hash) {
            session.order.retain(|h| h != &entry.prompt_hash);
        }
        session.order.push(entry.prompt_hash.clone());
        session.by_hash.insert(entry.prompt_hash.clone(), entry);
        Ok(())
    }

    /// All live entries, oldest first.
    pub fn entries(&self) -> Vec<CacheEntry> {
        let session = self.session.read().expect("cache lock poisoned");
        self.snapshot_order
            .iter()
            .filter(|h| !session.by_hash.contains_key(*h))
            .map(|h| self.snapshot[h].clone())
            .chain(session.order.iter().map(|h| session.by_hash[h].clone()))
            .collect()
    }

    /// The newest entry per query id, optionally restricted to one model.
    pub fn latest_by_query(&self, model: Option<&str>) -> HashMap<String, CacheEntry> {
        let mut out = HashMap::new();
        for e in self.entries() {
            if model.is_none_or(|m| m == e.model) {
                out.insert(e.query_id.clone(), e);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        let session = self.session.read().expect("cache lock poisoned");
        self.snapshot.len()
            + session
                .by_hash
                .keys()
                .filter(|h| !self.snapshot.contains_key(*h))
                .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(q: &str, h: &str, d: &str) -> CacheEntry {
        CacheEntry {
            query_id: q.into(),
            model: "m".into(),
            prompt_hash: h.into(),
            description: d.into(),
            stages: BTreeMap::new(),
            latency_ms: 3,
        }
    }

    #[test]
    fn last_entry_wins_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let a = serde_json::to_string(&entry("q1", "h1", "old")).unwrap();
        let b = serde_json::to_string(&entry("q1", "h1", "new")).unwrap();
        std::fs::write(&path, format!("{a}\n{b}\n")).unwrap();
        let cache = DescriptionCache::open(&path).unwrap();
        assert_eq!(cache.get("h1").unwrap().description, "new");
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn append_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let cache = DescriptionCache::open(&path).unwrap();
        assert!(cache.is_empty());
        cache.append(entry("q1", "h1", "a dog")).unwrap();
        cache.append(entry("q2", "h2", "a cat")).unwrap();
        assert_eq!(cache.get("h2").unwrap().description, "a cat");
        let reloaded = DescriptionCache::open(&path).unwrap();
        assert_eq!(reloaded.entries(), cache.entries());
        assert_eq!(reloaded.latest_by_query(Some("m"))["q1"].description, "a dog");
        assert!(reloaded.latest_by_query(Some("other")).is_empty());
    }

    #[test]
    fn interrupted_tail_is_dropped() {
        let a = serde_json::to_string(&entry("q1", "h1", "x")).unwrap();
        let parsed = parse_cache(&format!("{a}\n{{\"query_id\": \"q2\", \"mod")).unwrap();
        assert_eq!(parsed.len(), 1);
    }

    #[test]
    fn corrupt_middle_line_reports_line_number() {
        let a = serde_json::to_string(&entry("q1", "h1", "x")).unwrap();
        let err = parse_cache(&format!("{a}\nnot json\n{a}\n")).unwrap_err();
        assert!(matches!(err, CacheError::Parse { line: 2, .. }));
    }
}
