//! Canonical function-entry execution traces.
//!
//! A trace file is UTF-8 text with one record per line in the form
//! `<pid> <file> <func>` (single spaces on output, any whitespace on
//! input). Lines starting with `#` and blank lines are ignored. This
//! line format is the bit-exact contract between the reproducer
//! harness and the minimizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One function-entry event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Thread/process id that logged the entry.
    pub pid: i64,
    /// Global order index, assigned from data-line position at ingestion.
    pub seq: usize,
    /// Relative source path of the defining file.
    pub file: String,
    /// Function identifier.
    pub func: String,
}

/// An ordered sequence of function-entry events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Free-text provenance (source file, collecting run, ...).
    pub source_note: String,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    /// A data line did not have exactly `<pid> <file> <func>` fields
    /// with an integer pid. The line number is 1-based.
    #[error("malformed trace line {0}: expected `<pid> <file> <func>`")]
    MalformedLine(usize),
}

/// Parses trace-file text into a [`Trace`].
///
/// `seq` is the 0-based index of the record among data lines; comment
/// (`#`) and blank lines are skipped and do not advance `seq`.
pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut records = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(TraceError::MalformedLine(line_no + 1));
        }
        let pid: i64 = fields[0]
            .parse()
            .map_err(|_| TraceError::MalformedLine(line_no + 1))?;
        records.push(TraceRecord {
            pid,
            seq: records.len(),
            file: fields[1].to_string(),
            func: fields[2].to_string(),
        });
    }
    Ok(Trace {
        records,
        source_note: String::new(),
    })
}

/// Renders a trace in the canonical line format, one record per line.
///
/// `seq` is positional in the format, so re-parsing a serialized trace
/// renumbers records 0..n; for traces that came from `parse_trace` this
/// is a field-for-field round trip.
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for r in &trace.records {
        out.push_str(&format!("{} {} {}\n", r.pid, r.file, r.func));
    }
    out
}

/// Keeps only records with the given pid. Original `seq` values are
/// preserved, so the result is a true subsequence of the input.
pub fn filter_by_pid(trace: &Trace, pid: i64) -> Trace {
    Trace {
        records: trace
            .records
            .iter()
            .filter(|r| r.pid == pid)
            .cloned()
            .collect(),
        source_note: trace.source_note.clone(),
    }
}
