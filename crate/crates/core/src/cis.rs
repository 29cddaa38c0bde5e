//! Complete Intersection Score: per-bug 1/0 indicator that every
//! reference-fix-edited function appears in a minimized trace, summed
//! over a corpus.
//!
//! Five nested record sets support stage-wise ablation of the
//! minimization pipeline: stack-matched records only, the anchored
//! span, span plus backward expansion, span plus both expansions, and
//! the full pid-filtered trace. The sets are nested by construction,
//! so the corpus score is non-decreasing across stages.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minimize::{
    anchor_matches, expand_window, minimize, AnchorSpan, MinimizeError, MinimizedTrace,
    MinimizerConfig,
};
use crate::report::CrashReport;
use crate::trace::{filter_by_pid, parse_trace, Trace};

/// Which record set a CIS computation runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CisStage {
    /// Records matched by the anchoring scan.
    StackMatched,
    /// All records inside the anchored span.
    Anchored,
    /// Span plus backward expansion.
    AnchoredBackward,
    /// Span plus backward and forward expansion.
    AnchoredForward,
    /// Every record of the crashing pid.
    FullPid,
    /// The actual minimizer output (budget-truncated window).
    Minimized,
}

impl CisStage {
    pub const ABLATION_ORDER: [CisStage; 5] = [
        CisStage::StackMatched,
        CisStage::Anchored,
        CisStage::AnchoredBackward,
        CisStage::AnchoredForward,
        CisStage::FullPid,
    ];
}

/// Function names visible at a given pipeline stage.
///
/// Stage sets other than `Minimized` are built over the untruncated
/// anchored span so that each stage is a superset of the previous one
/// even when the span alone exceeds the record budget. Anchoring
/// failures yield the empty set (the stage saw nothing).
pub fn stage_funcs(
    trace: &Trace,
    report: &CrashReport,
    candidate_file: &str,
    pid: i64,
    cfg: &MinimizerConfig,
    stage: CisStage,
) -> BTreeSet<String> {
    let filtered = filter_by_pid(trace, pid);
    if filtered.is_empty() {
        return BTreeSet::new();
    }
    if stage == CisStage::FullPid {
        return filtered.records.iter().map(|r| r.func.clone()).collect();
    }
    if stage == CisStage::Minimized {
        return match minimize(trace, report, candidate_file, pid, cfg) {
            Ok(m) => m.records.iter().map(|r| r.func.clone()).collect(),
            Err(_) => BTreeSet::new(),
        };
    }
    let matched = match anchor_matches(&filtered, report, candidate_file) {
        Ok(m) => m,
        Err(_) => return BTreeSet::new(),
    };
    if stage == CisStage::StackMatched {
        return matched
            .iter()
            .map(|&i| filtered.records[i].func.clone())
            .collect();
    }
    let span = AnchorSpan {
        start: *matched.iter().min().expect("non-empty"),
        end: *matched.iter().max().expect("non-empty"),
    };
    let (backward, forward) = match stage {
        CisStage::Anchored => (false, false),
        CisStage::AnchoredBackward => (true, false),
        CisStage::AnchoredForward => (true, true),
        _ => unreachable!(),
    };
    let win = expand_window(&filtered, span, cfg, backward, forward, false);
    filtered.records[win.start..=win.end]
        .iter()
        .map(|r| r.func.clone())
        .collect()
}

/// 1 iff every edited function occurs among the minimized records.
/// An empty edited set scores 1 (vacuous completeness).
pub fn score_cis(minimized: &MinimizedTrace, edited_funcs: &BTreeSet<String>) -> u8 {
    let present: BTreeSet<&str> = minimized.records.iter().map(|r| r.func.as_str()).collect();
    score_present(&present, edited_funcs)
}

fn score_present(present: &BTreeSet<&str>, edited: &BTreeSet<String>) -> u8 {
    if edited.iter().all(|f| present.contains(f.as_str())) {
        1
    } else {
        0
    }
}

/// Per-bug score plus corpus total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CisReport {
    pub per_bug: Vec<CisScore>,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CisScore {
    pub bug_id: String,
    pub score: u8,
}

/// Sums per-bug scores into a corpus report.
pub fn corpus_cis(scores: Vec<(String, u8)>) -> CisReport {
    let total = scores.iter().map(|(_, s)| u64::from(*s)).sum();
    CisReport {
        per_bug: scores
            .into_iter()
            .map(|(bug_id, score)| CisScore { bug_id, score })
            .collect(),
        total,
    }
}

/// One corpus entry: where to find the trace and report, which file was
/// localized, and which functions the reference fix edited.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CisManifestEntry {
    pub bug_id: String,
    pub trace: PathBuf,
    pub report: PathBuf,
    pub candidate_file: String,
    pub edited_funcs: Vec<String>,
    /// Crashing pid; defaults to the pid of the last trace record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pid: Option<i64>,
}

/// CIS corpus manifest, loaded from JSON. Relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CisManifest {
    pub bugs: Vec<CisManifestEntry>,
}

#[derive(Debug, Error)]
pub enum CisError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("bug {bug_id}: trace has no records, cannot derive a pid")]
    NoPid { bug_id: String },
    #[error(transparent)]
    Minimize(#[from] MinimizeError),
}

impl CisManifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CisError> {
        let text = fs::read_to_string(path).map_err(|source| CisError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: CisManifest =
            serde_json::from_str(&text).map_err(|e| CisError::Parse {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((manifest, base))
    }
}

/// Scores a corpus manifest at one stage.
pub fn run_cis(
    manifest: &CisManifest,
    base: &Path,
    cfg: &MinimizerConfig,
    stage: CisStage,
) -> Result<CisReport, CisError> {
    let mut scores = Vec::new();
    for entry in &manifest.bugs {
        let trace_path = base.join(&entry.trace);
        let trace_text = fs::read_to_string(&trace_path).map_err(|source| CisError::Io {
            path: trace_path.clone(),
            source,
        })?;
        let trace = parse_trace(&trace_text).map_err(|e| CisError::Parse {
            path: trace_path.clone(),
            detail: e.to_string(),
        })?;
        let report_path = base.join(&entry.report);
        let report_text = fs::read_to_string(&report_path).map_err(|source| CisError::Io {
            path: report_path.clone(),
            source,
        })?;
        let report: CrashReport =
            serde_json::from_str(&report_text).map_err(|e| CisError::Parse {
                path: report_path.clone(),
                detail: e.to_string(),
            })?;
        let pid = match entry.pid {
            Some(p) => p,
            None => {
                trace
                    .records
                    .last()
                    .ok_or(CisError::NoPid {
                        bug_id: entry.bug_id.clone(),
                    })?
                    .pid
            }
        };
        let edited: BTreeSet<String> = entry.edited_funcs.iter().cloned().collect();
        let funcs = stage_funcs(&trace, &report, &entry.candidate_file, pid, cfg, stage);
        let present: BTreeSet<&str> = funcs.iter().map(String::as_str).collect();
        scores.push((entry.bug_id.clone(), score_present(&present, &edited)));
    }
    Ok(corpus_cis(scores))
}
