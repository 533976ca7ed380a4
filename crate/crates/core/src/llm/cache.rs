use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Completion, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CachedValue {
    Completion(Completion),
    Embedding(Vec<f32>),
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    #[serde(flatten)]
    value: CachedValue,
}

/// Append-only JSONL response cache keyed by hex digest.
///
/// A trailing line without a newline is the remnant of an interrupted write:
/// it is dropped and the file truncated back to the last complete line. A
/// malformed complete line is reported as corruption.
pub struct ResponseCache {
    entries: Mutex<HashMap<String, CachedValue>>,
    file: Option<Mutex<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self { entries: Mutex::new(HashMap::new()), file: None }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut raw = String::new();
        file.read_to_string(&mut raw)?;

        let complete_len = raw.rfind('\n').map_or(0, |i| i + 1);
        let mut entries = HashMap::new();
        for (n, line) in raw[..complete_len].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CacheLine = serde_json::from_str(line)
                .map_err(|e| Error::CacheCorruption { line: n + 1, reason: e.to_string() })?;
            entries.entry(parsed.key).or_insert(parsed.value);
        }
        if complete_len < raw.len() {
            file.set_len(complete_len as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Self { entries: Mutex::new(entries), file: Some(Mutex::new(file)) })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_completion(&self, key: &str) -> Option<Completion> {
        match self.entries.lock().unwrap().get(key) {
            Some(CachedValue::Completion(c)) => Some(c.clone()),
            _ => None,
        }
    }

    pub fn get_embedding(&self, key: &str) -> Option<EmbeddingVector> {
        match self.entries.lock().unwrap().get(key) {
            Some(CachedValue::Embedding(v)) => Some(EmbeddingVector::new(v.clone())),
            _ => None,
        }
    }

    /// Stores a completion; if another caller stored the key first, that
    /// earlier value wins and is returned.
    pub fn put_completion(&self, key: &str, value: Completion) -> Result<Completion> {
        match self.put(key, CachedValue::Completion(value))? {
            CachedValue::Completion(c) => Ok(c),
            CachedValue::Embedding(_) => Err(Error::CacheCorruption { line: 0, reason: format!("key {key} holds an embedding") }),
        }
    }

    pub fn put_embedding(&self, key: &str, value: EmbeddingVector) -> Result<EmbeddingVector> {
        match self.put(key, CachedValue::Embedding(value.values))? {
            CachedValue::Embedding(v) => Ok(EmbeddingVector::new(v)),
            CachedValue::Completion(_) => Err(Error::CacheCorruption { line: 0, reason: format!("key {key} holds a completion") }),
        }
    }

    fn put(&self, key: &str, value: CachedValue) -> Result<CachedValue> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(existing) = entries.get(key) {
            return Ok(existing.clone());
        }
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&CacheLine { key: key.to_string(), value: value.clone() })?;
            line.push('\n');
            let mut f = file.lock().unwrap();
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        entries.insert(key.to_string(), value.clone());
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn completion(text: &str) -> Completion {
        Completion { text: text.into(), prompt_tokens: 3, completion_tokens: 1 }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache.put_completion("k1", completion("one")).unwrap();
            cache.put_embedding("k2", EmbeddingVector::new(vec![0.5, -1.0])).unwrap();
        }
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.get_completion("k1").unwrap().text, "one");
        assert_eq!(cache.get_embedding("k2").unwrap().values, vec![0.5, -1.0]);
        assert!(cache.get_completion("k2").is_none());
    }

    #[test]
    fn partial_trailing_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache.put_completion("k1", completion("one")).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"key":"k2","compl"#).unwrap();
        drop(f);

        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        cache.put_completion("k3", completion("three")).unwrap();
        drop(cache);
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get_completion("k3").unwrap().text, "three");
    }

    #[test]
    fn malformed_complete_line_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(ResponseCache::open(&path), Err(Error::CacheCorruption { line: 1, .. })));
    }

    #[test]
    fn first_writer_wins() {
        let cache = ResponseCache::in_memory();
        cache.put_completion("k", completion("a")).unwrap();
        assert_eq!(cache.put_completion("k", completion("b")).unwrap().text, "a");
    }
}
