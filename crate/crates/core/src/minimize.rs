//! Trace minimization: stack-trace anchoring plus bounded, pattern-aware
//! expansion around the anchored span.
//!
//! The pipeline is `filter_by_pid -> anchor -> expand`:
//!
//! 1. **Anchoring** scans the pid-filtered trace backward from its end,
//!    matching the crash-report frames that belong to the candidate file
//!    innermost-frame-first. Each frame matches its latest occurrence
//!    before the previous match; frames never seen in the trace are
//!    skipped. The span runs from the earliest to the latest matched
//!    record and may contain unmatched records between matches.
//! 2. **Expansion** grows the span one record at a time, backward to
//!    completion and then forward. A direction stops at the trace
//!    boundary, when the total record budget (`max_records`) would be
//!    exceeded, or when the names added in that direction end with
//!    `min_repeats` identical consecutive blocks of some period
//!    `k <= max_period`; on a repeat the final block is trimmed from the
//!    output. Repetition is detected only over names the expansion added
//!    in that direction, never over the span itself.
//!
//! A span that alone exceeds `max_records` is truncated to its last
//! `max_records` records (the records nearest the crash) so that every
//! minimized trace respects the budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::CrashReport;
use crate::trace::{filter_by_pid, Trace, TraceRecord};

/// Knobs for the expansion stopping rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimizerConfig {
    /// Hard budget on minimized-trace records.
    #[serde(default = "default_max_records")]
    pub max_records: usize,
    /// Largest repetition period considered by the stopping rule.
    #[serde(default = "default_max_period")]
    pub max_period: usize,
    /// Number of identical consecutive blocks that counts as a repeat.
    #[serde(default = "default_min_repeats")]
    pub min_repeats: usize,
}

fn default_max_records() -> usize {
    200
}
fn default_max_period() -> usize {
    8
}
fn default_min_repeats() -> usize {
    2
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        MinimizerConfig {
            max_records: default_max_records(),
            max_period: default_max_period(),
            min_repeats: default_min_repeats(),
        }
    }
}

impl MinimizerConfig {
    pub fn validate(&self) -> Result<(), MinimizeError> {
        if self.max_records < 1 || self.max_period < 1 || self.min_repeats < 2 {
            return Err(MinimizeError::InvalidConfig);
        }
        Ok(())
    }
}

/// Inclusive index range into a trace's records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSpan {
    pub start: usize,
    pub end: usize,
}

/// The distilled window around the crash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimizedTrace {
    /// Contiguous subsequence of the pid-filtered trace.
    pub records: Vec<TraceRecord>,
    /// Inclusive index range *into `records`* covering the anchored span.
    pub anchor_span: (usize, usize),
    pub candidate_file: String,
    pub pid: i64,
}

impl MinimizedTrace {
    /// Function names present in the window, in trace order.
    pub fn funcs(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.func.as_str()).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MinimizeError {
    /// No in-candidate-file report frame occurs in the trace.
    #[error("no stack-trace frame from the candidate file occurs in the trace")]
    NoAnchor,
    /// The pid filter left nothing to minimize.
    #[error("trace is empty after filtering to the crashing pid")]
    EmptyTrace,
    #[error("minimizer config violates its invariants")]
    InvalidConfig,
}

/// Report frames that belong to the candidate file, report order
/// preserved. A frame without file information belongs to the candidate
/// file when the trace logged its function from that file.
fn candidate_frames<'a>(
    trace: &Trace,
    report: &'a CrashReport,
    candidate_file: &str,
) -> Vec<&'a str> {
    report
        .frames
        .iter()
        .filter(|f| match &f.file {
            Some(file) => file == candidate_file,
            None => trace
                .records
                .iter()
                .any(|r| r.func == f.func && r.file == candidate_file),
        })
        .map(|f| f.func.as_str())
        .collect()
}

/// Indices matched by the backward anchoring scan, in match order
/// (innermost frame first, so indices are decreasing).
pub(crate) fn anchor_matches(
    trace: &Trace,
    report: &CrashReport,
    candidate_file: &str,
) -> Result<Vec<usize>, MinimizeError> {
    let frames = candidate_frames(trace, report, candidate_file);
    let mut matched = Vec::new();
    let mut bound = trace.records.len();
    for func in frames {
        if let Some(pos) = trace.records[..bound].iter().rposition(|r| r.func == func) {
            matched.push(pos);
            bound = pos;
        }
    }
    if matched.is_empty() {
        return Err(MinimizeError::NoAnchor);
    }
    Ok(matched)
}

/// Stack-trace anchoring: the span of the backward frame scan.
pub fn anchor(
    trace: &Trace,
    report: &CrashReport,
    candidate_file: &str,
) -> Result<AnchorSpan, MinimizeError> {
    let matched = anchor_matches(trace, report, candidate_file)?;
    Ok(AnchorSpan {
        start: *matched.iter().min().expect("non-empty"),
        end: *matched.iter().max().expect("non-empty"),
    })
}

/// Returns the period `k` when `names` ends with `min_repeats` identical
/// consecutive blocks of length `k <= max_period`; smallest `k` wins.
fn trailing_repeat(names: &[&str], cfg: &MinimizerConfig) -> Option<usize> {
    for k in 1..=cfg.max_period {
        if names.len() < cfg.min_repeats * k {
            continue;
        }
        let tail = &names[names.len() - k..];
        let repeated = (1..cfg.min_repeats).all(|r| {
            let start = names.len() - (r + 1) * k;
            &names[start..start + k] == tail
        });
        if repeated {
            return Some(k);
        }
    }
    None
}

/// Window of trace indices produced by expansion (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

pub(crate) fn expand_window(
    trace: &Trace,
    span: AnchorSpan,
    cfg: &MinimizerConfig,
    backward: bool,
    forward: bool,
    truncate_span: bool,
) -> Window {
    let span_len = span.end - span.start + 1;
    if truncate_span && span_len > cfg.max_records {
        return Window {
            start: span.end + 1 - cfg.max_records,
            end: span.end,
        };
    }

    let mut added_back: Vec<&str> = Vec::new();
    if backward {
        let mut i = span.start;
        while i > 0 {
            if span_len + added_back.len() + 1 > cfg.max_records {
                break;
            }
            i -= 1;
            added_back.push(trace.records[i].func.as_str());
            if let Some(k) = trailing_repeat(&added_back, cfg) {
                added_back.truncate(added_back.len() - k);
                break;
            }
        }
    }

    let mut added_fwd: Vec<&str> = Vec::new();
    if forward {
        let mut j = span.end;
        while j + 1 < trace.records.len() {
            if span_len + added_back.len() + added_fwd.len() + 1 > cfg.max_records {
                break;
            }
            j += 1;
            added_fwd.push(trace.records[j].func.as_str());
            if let Some(k) = trailing_repeat(&added_fwd, cfg) {
                added_fwd.truncate(added_fwd.len() - k);
                break;
            }
        }
    }

    Window {
        start: span.start - added_back.len(),
        end: span.end + added_fwd.len(),
    }
}

/// Expands an anchored span backward then forward under the stopping
/// rule. The trace must already be filtered to the crashing pid.
pub fn expand(
    trace: &Trace,
    span: AnchorSpan,
    cfg: &MinimizerConfig,
    candidate_file: &str,
) -> MinimizedTrace {
    let win = expand_window(trace, span, cfg, true, true, true);
    let records: Vec<TraceRecord> = trace.records[win.start..=win.end].to_vec();
    let pid = records.first().map(|r| r.pid).unwrap_or(0);
    MinimizedTrace {
        anchor_span: (
            span.start.max(win.start) - win.start,
            span.end - win.start,
        ),
        records,
        candidate_file: candidate_file.to_string(),
        pid,
    }
}

/// Full minimization: pid filter, anchor, expand.
pub fn minimize(
    trace: &Trace,
    report: &CrashReport,
    candidate_file: &str,
    pid: i64,
    cfg: &MinimizerConfig,
) -> Result<MinimizedTrace, MinimizeError> {
    cfg.validate()?;
    let filtered = filter_by_pid(trace, pid);
    if filtered.is_empty() {
        return Err(MinimizeError::EmptyTrace);
    }
    let span = anchor(&filtered, report, candidate_file)?;
    let mut out = expand(&filtered, span, cfg, candidate_file);
    out.pid = pid;
    Ok(out)
}
