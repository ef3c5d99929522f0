//! Append-only JSON-lines run log. Every line is a self-contained, versioned
//! record, so a crash loses at most the line being written.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::controller::RunRecord;
use crate::dataset::{FrequencyReport, TrainingRecord};
use crate::report::EvalReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum LogEntry {
    Run(Box<RunRecord>),
    Report(Box<EvalReport>),
    Training(Box<TrainingRecord>),
    Frequency(FrequencyReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub schema_version: u32,
    pub entry: LogEntry,
}

impl LogLine {
    pub fn new(entry: LogEntry) -> Self {
        LogLine { schema_version: SCHEMA_VERSION, entry }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunLogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
}

/// Serializes one entry as a single line (no trailing newline).
pub fn encode(entry: &LogEntry) -> String {
    serde_json::to_string(&LogLine::new(entry.clone())).expect("log entries always serialize")
}

/// Appends lines to a log file. One writer per file is the single
/// serialization point; the mutex keeps concurrent appends whole.
pub struct RunLogWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl RunLogWriter {
    /// Opens `path` for appending, creating it and its parent directory.
    pub fn append_to(path: impl AsRef<Path>) -> Result<Self, RunLogError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| RunLogError::Io { path: path.clone(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(RunLogWriter { path, file: Mutex::new(file) })
    }

    /// Truncates `path` first.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, RunLogError> {
        let p = path.as_ref();
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| RunLogError::Io { path: p.to_path_buf(), source })?;
        }
        File::create(p).map_err(|source| RunLogError::Io { path: p.to_path_buf(), source })?;
        Self::append_to(p)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &LogEntry) -> Result<(), RunLogError> {
        let mut line = encode(entry);
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|source| RunLogError::Io { path: self.path.clone(), source })
    }

    pub fn append_all<'a>(&self, entries: impl IntoIterator<Item = &'a LogEntry>) -> Result<(), RunLogError> {
        entries.into_iter().try_for_each(|e| self.append(e))
    }
}

/// Reads every entry; blank lines are skipped, anything else must parse and
/// carry the current schema version.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>, RunLogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| RunLogError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RunLogError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| RunLogError::Malformed { path: path.to_path_buf(), line: i + 1, message };
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if parsed.schema_version != SCHEMA_VERSION {
            return Err(malformed(format!("schema version {} (expected {SCHEMA_VERSION})", parsed.schema_version)));
        }
        out.push(parsed.entry);
    }
    Ok(out)
}

/// The run records of a log, in append order.
pub fn run_records(entries: &[LogEntry]) -> Vec<RunRecord> {
    entries
        .iter()
        .filter_map(|e| match e {
            LogEntry::Run(r) => Some((**r).clone()),
            _ => None,
        })
        .collect()
}

/// The last report written to a log.
pub fn last_report(entries: &[LogEntry]) -> Option<EvalReport> {
    entries.iter().rev().find_map(|e| match e {
        LogEntry::Report(r) => Some((**r).clone()),
        _ => None,
    })
}

/// Recomputes the report from a log's run records.
pub fn replay(entries: &[LogEntry]) -> EvalReport {
    EvalReport::from_records(&run_records(entries))
}
