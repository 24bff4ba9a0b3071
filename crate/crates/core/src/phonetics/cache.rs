//! Content-addressed cache for LLM-backed phonetic conversions.
//!
//! Entries live in memory behind an RwLock (concurrent readers) and are
//! appended to a JSON-lines file when the cache is persistent (serialized
//! writers). Keys hash (scheme, language, source text), so re-running an
//! experiment replays conversions without service calls.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::PhoneticScheme;
use crate::lang::Language;
use crate::util::sha256_hex;

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    scheme: PhoneticScheme,
    language: Language,
    source_text: String,
    text: String,
}

pub struct ConversionCache {
    map: RwLock<BTreeMap<String, String>>,
    file: Option<Mutex<std::fs::File>>,
}

impl ConversionCache {
    pub fn in_memory() -> Self {
        ConversionCache {
            map: RwLock::new(BTreeMap::new()),
            file: None,
        }
    }

    /// Open (or create) a persistent cache file and load its entries.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let existing = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e),
        };
        let cache = ConversionCache {
            map: RwLock::new(BTreeMap::new()),
            file: Some(Mutex::new(
                std::fs::OpenOptions::new().create(true).append(true).open(path)?,
            )),
        };
        cache.load_lines(&existing);
        Ok(cache)
    }

    /// Merge entries from JSON-lines text (e.g. a bundled golden cache).
    pub fn load_lines(&self, text: &str) -> usize {
        let mut loaded = 0;
        let mut map = self.map.write().expect("cache poisoned");
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheLine>(line) {
                Ok(entry) => {
                    let expect = key_of(entry.scheme, entry.language, &entry.source_text);
                    if expect != entry.key {
                        log::warn!("conversion cache line with stale key skipped");
                        continue;
                    }
                    map.insert(entry.key, entry.text);
                    loaded += 1;
                }
                Err(e) => log::warn!("skipping bad conversion cache line: {e}"),
            }
        }
        loaded
    }

    pub fn get(&self, scheme: PhoneticScheme, language: Language, source: &str) -> Option<String> {
        self.map
            .read()
            .expect("cache poisoned")
            .get(&key_of(scheme, language, source))
            .cloned()
    }

    pub fn insert(
        &self,
        scheme: PhoneticScheme,
        language: Language,
        source: &str,
        text: &str,
    ) -> std::io::Result<()> {
        let key = key_of(scheme, language, source);
        {
            let mut map = self.map.write().expect("cache poisoned");
            if map.insert(key.clone(), text.to_string()).is_some() {
                return Ok(());
            }
        }
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&CacheLine {
                key,
                scheme,
                language,
                source_text: source.to_string(),
                text: text.to_string(),
            })
            .expect("cache line serializes");
            let mut f = file.lock().expect("cache file poisoned");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn key_of(scheme: PhoneticScheme, language: Language, source: &str) -> String {
    sha256_hex(format!("{scheme}\u{0}{language}\u{0}{source}").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persist_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lsp.jsonl");
        {
            let cache = ConversionCache::open(&path).unwrap();
            cache
                .insert(PhoneticScheme::Lsp, Language::En, "the sun is rising", "thuh sun iz rahy-zing")
                .unwrap();
        }
        let cache = ConversionCache::open(&path).unwrap();
        assert_eq!(
            cache.get(PhoneticScheme::Lsp, Language::En, "the sun is rising"),
            Some("thuh sun iz rahy-zing".to_string())
        );
        assert_eq!(cache.get(PhoneticScheme::Lsp, Language::Ja, "the sun is rising"), None);
    }

    #[test]
    fn tampered_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lsp.jsonl");
        {
            let cache = ConversionCache::open(&path).unwrap();
            cache.insert(PhoneticScheme::Lsp, Language::En, "a", "uh").unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"a\"", "\"b\"")).unwrap();
        let cache = ConversionCache::open(&path).unwrap();
        assert!(cache.is_empty());
    }
}
