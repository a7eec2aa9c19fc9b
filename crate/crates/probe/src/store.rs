//! Append-only JSON-lines result store with an index file.
//!
//! `records.jsonl` holds one `ProbeRecord` per line. `index.json` maps each
//! record name to its line numbers and carries the run summary; it is
//! rewritten by `finish`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{ProbeRecord, SCHEMA_VERSION};
use crate::error::ProbeError;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub schema: u32,
    pub records: usize,
    /// Record name → 1-based line numbers in `records.jsonl`.
    pub lines: BTreeMap<String, Vec<usize>>,
    pub summary: serde_json::Value,
}

/// Single writer. Each run starts from an empty `records.jsonl`.
#[derive(Debug)]
pub struct ResultStore {
    dir: PathBuf,
    out: BufWriter<File>,
    lines: BTreeMap<String, Vec<usize>>,
    count: usize,
}

impl ResultStore {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self, ProbeError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| ProbeError::io(&dir, e))?;
        let path = dir.join(RECORDS_FILE);
        let f = File::create(&path).map_err(|e| ProbeError::io(&path, e))?;
        Ok(Self {
            dir,
            out: BufWriter::new(f),
            lines: BTreeMap::new(),
            count: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, record: &ProbeRecord) -> Result<(), ProbeError> {
        let line = serde_json::to_string(record)?;
        writeln!(self.out, "{line}").map_err(|e| ProbeError::io(self.dir.join(RECORDS_FILE), e))?;
        self.count += 1;
        self.lines.entry(record.name.clone()).or_default().push(self.count);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Flush the records and write the index with `summary`.
    pub fn finish<S: Serialize>(mut self, summary: &S) -> Result<StoreIndex, ProbeError> {
        self.out
            .flush()
            .map_err(|e| ProbeError::io(self.dir.join(RECORDS_FILE), e))?;
        let index = StoreIndex {
            schema: SCHEMA_VERSION,
            records: self.count,
            lines: std::mem::take(&mut self.lines),
            summary: serde_json::to_value(summary)?,
        };
        let path = self.dir.join(INDEX_FILE);
        let mut text = serde_json::to_string_pretty(&index)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| ProbeError::io(&path, e))?;
        Ok(index)
    }
}

/// Read back every record, rejecting other schema versions.
pub fn read_records(dir: impl AsRef<Path>) -> Result<Vec<ProbeRecord>, ProbeError> {
    let path = dir.as_ref().join(RECORDS_FILE);
    let f = File::open(&path).map_err(|e| ProbeError::io(&path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| ProbeError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProbeRecord = serde_json::from_str(&line)?;
        if rec.schema != SCHEMA_VERSION {
            return Err(ProbeError::UnsupportedSchema(path, rec.schema));
        }
        out.push(rec);
    }
    Ok(out)
}
