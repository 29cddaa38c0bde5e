//! Bug bundles: self-contained repair tasks loaded from a JSON
//! manifest.
//!
//! Manifest shape (paths relative to the manifest file):
//!
//! ```json
//! {
//!   "bug_id": "null-deref",
//!   "workspace": "workspace",
//!   "localization_candidates": ["items.c"],
//!   "report": { "bug_type": "...", "frames": [...], "raw_text": "..." },
//!   "commands": {
//!     "compile_check": "cc -fsyntax-only {file}",
//!     "build": {
//!       "compile": "cc -c {file} -o {object}",
//!       "link": "cc {objects} -o {binary}"
//!     },
//!     "reproduce": "{binary}"
//!   },
//!   "crash_patterns": ["=== CRASH: "],
//!   "reproduce_timeout_secs": 30
//! }
//! ```
//!
//! Command templates run through `sh -c` with the workspace as the
//! working directory. Placeholders: `{file}` (relative source path),
//! `{object}` (output object path), `{objects}` (space-joined object
//! paths), `{binary}` (output binary path), `{workspace}` (absolute
//! workspace root), `{trace_log}` (trace log path, reproduce only).
//! Crash patterns are regexes over the reproducer output; an entry may
//! be a plain string or `{"name": ..., "regex": ...}` to control the
//! reported bug type.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::CrashReport;

pub const DEFAULT_REPRODUCE_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildCommands {
    /// Per-file compile-to-object template.
    pub compile: String,
    /// Link template combining `{objects}` into `{binary}`.
    pub link: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleCommands {
    /// Per-file syntax/compile check; must not produce a link artifact.
    pub compile_check: String,
    pub build: BuildCommands,
    /// Reproducer run command.
    pub reproduce: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CrashPatternSpec {
    Plain(String),
    Named { name: String, regex: String },
}

/// A compiled crash-output detector.
#[derive(Debug, Clone)]
pub struct CrashPattern {
    pub name: String,
    pub regex: Regex,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleManifest {
    bug_id: String,
    workspace: String,
    localization_candidates: Vec<String>,
    report: CrashReport,
    commands: BundleCommands,
    crash_patterns: Vec<CrashPatternSpec>,
    #[serde(default)]
    reproduce_timeout_secs: Option<u64>,
}

/// A loaded, validated bug bundle.
#[derive(Debug, Clone)]
pub struct BugBundle {
    pub bug_id: String,
    /// Absolute path of the workspace snapshot.
    pub workspace: PathBuf,
    pub localization_candidates: Vec<String>,
    pub report: CrashReport,
    pub commands: BundleCommands,
    pub crash_patterns: Vec<CrashPattern>,
    pub reproduce_timeout: Duration,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("failed to read bundle manifest {path}: {detail}")]
    Read { path: PathBuf, detail: String },
    #[error("failed to parse bundle manifest {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("bundle workspace does not exist: {0}")]
    WorkspaceMissing(PathBuf),
    #[error("localization candidate not found in workspace: {0}")]
    CandidateMissing(String),
    #[error("bundle has no crash patterns")]
    NoCrashPatterns,
    #[error("invalid crash pattern `{pattern}`: {detail}")]
    BadPattern { pattern: String, detail: String },
    #[error("invalid crash report: {0}")]
    BadReport(String),
}

impl BugBundle {
    pub fn load(manifest_path: &Path) -> Result<Self, BundleError> {
        let text = fs::read_to_string(manifest_path).map_err(|e| BundleError::Read {
            path: manifest_path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let manifest: BundleManifest =
            serde_json::from_str(&text).map_err(|e| BundleError::Parse {
                path: manifest_path.to_path_buf(),
                detail: e.to_string(),
            })?;
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let workspace = base.join(&manifest.workspace);
        let workspace = workspace
            .canonicalize()
            .map_err(|_| BundleError::WorkspaceMissing(workspace.clone()))?;
        if !workspace.is_dir() {
            return Err(BundleError::WorkspaceMissing(workspace));
        }
        for candidate in &manifest.localization_candidates {
            if !workspace.join(candidate).is_file() {
                return Err(BundleError::CandidateMissing(candidate.clone()));
            }
        }
        if manifest.crash_patterns.is_empty() {
            return Err(BundleError::NoCrashPatterns);
        }
        manifest
            .report
            .validate()
            .map_err(|e| BundleError::BadReport(e.to_string()))?;
        let mut crash_patterns = Vec::new();
        for spec in &manifest.crash_patterns {
            let (name, pattern) = match spec {
                CrashPatternSpec::Plain(p) => (p.clone(), p.clone()),
                CrashPatternSpec::Named { name, regex } => (name.clone(), regex.clone()),
            };
            let regex = Regex::new(&pattern).map_err(|e| BundleError::BadPattern {
                pattern: pattern.clone(),
                detail: e.to_string(),
            })?;
            crash_patterns.push(CrashPattern { name, regex });
        }
        Ok(BugBundle {
            bug_id: manifest.bug_id,
            workspace,
            localization_candidates: manifest.localization_candidates,
            report: manifest.report,
            commands: manifest.commands,
            crash_patterns,
            reproduce_timeout: Duration::from_secs(
                manifest
                    .reproduce_timeout_secs
                    .unwrap_or(DEFAULT_REPRODUCE_TIMEOUT_SECS),
            ),
        })
    }
}
