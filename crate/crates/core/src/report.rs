//! Crash reports: the sanitizer bug class plus the ordered stack frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One stack frame, most-recent-first in [`CrashReport::frames`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub func: String,
    /// Source file of the frame when the report carries it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl Frame {
    pub fn new(func: impl Into<String>, file: Option<&str>) -> Self {
        Frame {
            func: func.into(),
            file: file.map(str::to_string),
        }
    }
}

/// A crash report as consumed by minimization and repair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashReport {
    /// Bug class, e.g. a sanitizer banner ("memory leak", "null-deref").
    pub bug_type: String,
    /// Stack frames, most-recent-first.
    pub frames: Vec<Frame>,
    /// The full report text.
    pub raw_text: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("crash report has no stack frames")]
    NoFrames,
    #[error("crash report frame {0} has an empty function name")]
    EmptyFunc(usize),
}

impl CrashReport {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.frames.is_empty() {
            return Err(ReportError::NoFrames);
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.func.is_empty() {
                return Err(ReportError::EmptyFunc(i));
            }
        }
        Ok(())
    }
}

/// Parses the stack-dump block that instrumented toy reproducers print
/// on a detected crash:
///
/// ```text
/// === CRASH: <bug type> ===
/// #0 <func> [<file>]
/// #1 <func> [<file>]
/// === END CRASH ===
/// ```
///
/// Frames are listed most-recent-first (#0 innermost). Returns `None`
/// when no block is present in `output`.
pub fn parse_crash_block(output: &str) -> Option<(String, Vec<Frame>)> {
    let mut lines = output.lines();
    let banner = loop {
        let line = lines.next()?;
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("=== CRASH: ") {
            if let Some(bug) = rest.strip_suffix(" ===") {
                break bug.to_string();
            }
        }
    };
    let mut frames = Vec::new();
    for line in lines {
        let t = line.trim();
        if t == "=== END CRASH ===" {
            break;
        }
        if !t.starts_with('#') {
            continue;
        }
        let mut fields = t.split_whitespace();
        let _idx = fields.next();
        let func = match fields.next() {
            Some(f) => f.to_string(),
            None => continue,
        };
        let file = fields.next().map(str::to_string);
        frames.push(Frame { func, file });
    }
    Some((banner, frames))
}
