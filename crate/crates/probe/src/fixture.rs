//! Recorded-response transport used in tests and offline runs.
//!
//! A fixture directory holds `<name>.status` and `<name>.json` (or
//! `<name>.txt`) files. A status file may list several lines; successive
//! requests for the same name walk through them and then repeat the last
//! one, which scripts sequences such as "time out twice, then answer".

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::ProbeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureResponse {
    pub status: String,
    pub body: Option<String>,
}

#[derive(Debug)]
pub struct FixtureDir {
    root: PathBuf,
    calls: Mutex<HashMap<String, usize>>,
}

impl FixtureDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read(&self, path: &Path) -> Result<Option<String>, ProbeError> {
        match std::fs::read_to_string(path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ProbeError::io(path, e)),
        }
    }

    /// The next response for `name`, or `None` if no fixture exists. A body
    /// without a status file gets `default_status`.
    pub fn fetch(&self, name: &str, default_status: &str) -> Result<Option<FixtureResponse>, ProbeError> {
        if name.is_empty() || name.starts_with('.') || name.contains(['/', '\\']) {
            return Err(ProbeError::Fixture {
                path: self.root.clone(),
                reason: format!("unsafe fixture name {name:?}"),
            });
        }
        let status_path = self.root.join(format!("{name}.status"));
        let mut body = self.read(&self.root.join(format!("{name}.json")))?;
        if body.is_none() {
            body = self.read(&self.root.join(format!("{name}.txt")))?;
        }
        let status = match self.read(&status_path)? {
            Some(text) => {
                let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
                if lines.is_empty() {
                    return Err(ProbeError::Fixture {
                        path: status_path,
                        reason: "empty status file".into(),
                    });
                }
                let mut calls = self.calls.lock().unwrap();
                let n = calls.entry(name.to_string()).or_insert(0);
                let line = lines[(*n).min(lines.len() - 1)].to_string();
                *n += 1;
                line
            }
            None if body.is_some() => default_status.to_string(),
            None => return Ok(None),
        };
        Ok(Some(FixtureResponse { status, body }))
    }
}
