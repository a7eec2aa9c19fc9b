//! Probe-result cache with a time-to-live, optionally persisted as JSON lines.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ProbeError;

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    stored_ms: u64,
    value: serde_json::Value,
}

#[derive(Debug)]
pub struct ProbeCache {
    ttl: Duration,
    entries: Mutex<HashMap<String, (Duration, serde_json::Value)>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl ProbeCache {
    /// In-memory only.
    pub fn memory(ttl: Duration) -> Self {
        Self {
            ttl,
            entries: Mutex::new(HashMap::new()),
            file: None,
        }
    }

    /// Backed by `<dir>/cache.jsonl`; earlier entries are loaded, later lines
    /// win.
    pub fn open(dir: impl AsRef<Path>, ttl: Duration) -> Result<Self, ProbeError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| ProbeError::io(dir, e))?;
        let path = dir.join("cache.jsonl");
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| ProbeError::io(&path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| ProbeError::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, (Duration::from_millis(e.stored_ms), e.value));
                    }
                    Err(e) => log::warn!("{}:{}: ignoring bad cache line: {e}", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ProbeError::io(&path, e))?;
        Ok(Self {
            ttl,
            entries: Mutex::new(entries),
            file: Some((path, Mutex::new(file))),
        })
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// The value stored under `key` if it is younger than the TTL at `now`.
    pub fn get<T: DeserializeOwned>(&self, key: &str, now: Duration) -> Option<T> {
        let entries = self.entries.lock().unwrap();
        let (stored, value) = entries.get(key)?;
        if now.saturating_sub(*stored) >= self.ttl {
            return None;
        }
        serde_json::from_value(value.clone()).ok()
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T, now: Duration) -> Result<(), ProbeError> {
        let value = serde_json::to_value(value)?;
        if let Some((path, file)) = &self.file {
            let line = serde_json::to_string(&Entry {
                key: key.to_string(),
                stored_ms: now.as_millis() as u64,
                value: value.clone(),
            })?;
            let mut f = file.lock().unwrap();
            writeln!(f, "{line}").map_err(|e| ProbeError::io(path, e))?;
        }
        self.entries.lock().unwrap().insert(key.to_string(), (now, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
