use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    raw_text: String,
}

/// Completion cache keyed by request fingerprint (plus sample number for
/// resamples). The on-disk form is an append-only JSONL file; the first
/// stored value for a key wins.
#[derive(Debug)]
pub struct ResponseCache {
    inner: Mutex<Inner>,
}

#[derive(Debug)]
struct Inner {
    entries: HashMap<String, String>,
    file: Option<File>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            inner: Mutex::new(Inner {
                entries: HashMap::new(),
                file: None,
                path: None,
            }),
        }
    }

    /// Opens or creates the cache file at `path`.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine = serde_json::from_str(&line).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", path.display(), n + 1),
                    )
                })?;
                entries.entry(entry.key).or_insert(entry.raw_text);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache {
            inner: Mutex::new(Inner {
                entries,
                file: Some(file),
                path: Some(path.to_path_buf()),
            }),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.inner.lock().entries.get(key).cloned()
    }

    pub fn put(&self, key: &str, raw_text: &str) -> std::io::Result<()> {
        let mut inner = self.inner.lock();
        if inner.entries.contains_key(key) {
            return Ok(());
        }
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&CacheLine {
                key: key.to_string(),
                raw_text: raw_text.to_string(),
            })?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner.entries.insert(key.to_string(), raw_text.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.inner.lock().path.clone()
    }
}
