use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::ChatResponse;

/// Content-addressed response store.
///
/// The directory variant keeps one JSON file per request key under a
/// two-character fan-out directory (`ab/abcdef….json`). Writes go through a
/// temporary file and an atomic rename, so concurrent readers never see a
/// partial entry.
pub enum ResponseCache {
    Dir(PathBuf),
    Memory(Mutex<HashMap<String, ChatResponse>>),
}

impl ResponseCache {
    pub fn new(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(ResponseCache::Dir(dir.as_ref().to_path_buf()))
    }

    pub fn in_memory() -> Self {
        ResponseCache::Memory(Mutex::new(HashMap::new()))
    }

    fn entry_path(dir: &Path, key: &str) -> PathBuf {
        let fan = key.get(..2).unwrap_or("__");
        dir.join(fan).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> std::io::Result<Option<ChatResponse>> {
        match self {
            ResponseCache::Memory(map) => Ok(map.lock().unwrap().get(key).cloned()),
            ResponseCache::Dir(dir) => {
                let path = Self::entry_path(dir, key);
                match std::fs::read(&path) {
                    Ok(bytes) => match serde_json::from_slice(&bytes) {
                        Ok(resp) => Ok(Some(resp)),
                        Err(e) => {
                            log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                            Ok(None)
                        }
                    },
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }

    pub fn put(&self, key: &str, response: &ChatResponse) -> std::io::Result<()> {
        match self {
            ResponseCache::Memory(map) => {
                map.lock().unwrap().insert(key.to_string(), response.clone());
                Ok(())
            }
            ResponseCache::Dir(dir) => {
                let path = Self::entry_path(dir, key);
                let parent = path.parent().expect("entry has a parent");
                std::fs::create_dir_all(parent)?;
                let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
                serde_json::to_writer(&mut tmp, response)?;
                tmp.flush()?;
                tmp.persist(&path).map_err(|e| e.error)?;
                Ok(())
            }
        }
    }
}
