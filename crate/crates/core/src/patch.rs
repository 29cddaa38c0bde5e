//! Replace-based patching: edits are (original, replaced) snippet pairs
//! applied against workspace files.
//!
//! Matching is exact after normalizing line endings to `\n` and
//! stripping trailing whitespace per line on both the snippet and the
//! file; there is no fuzzy matching. A snippet must cover whole lines
//! and must occur exactly once, otherwise the edit is rejected. A
//! failed patch application leaves every file byte-identical to its
//! pre-state.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diff::unified_diff;

/// One replace-based code modification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    /// Relative path of the file to modify.
    pub file: String,
    /// Snippet that must occur exactly once in the file.
    pub original: String,
    /// Verbatim replacement for the matched region.
    pub replaced: String,
    /// Free-text rationale for the edit; may be empty.
    #[serde(default)]
    pub reason: String,
}

/// A candidate fix: the restated hypothesis plus ordered edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    #[serde(default)]
    pub solution_text: String,
    pub edits: Vec<Edit>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("file not found in workspace: {0}")]
    FileMissing(String),
    #[error("original snippet not found in {file}")]
    NoMatch { file: String },
    #[error("original snippet occurs {count} times in {file}, expected exactly one")]
    AmbiguousMatch { file: String, count: usize },
    #[error("edit {index} has an empty original snippet")]
    EmptyOriginal { index: usize },
    #[error("patch has no edits")]
    EmptyPatch,
    #[error("i/o error on {file}: {detail}")]
    Io { file: String, detail: String },
}

/// Distinct `edit.file` values in first-occurrence order.
pub fn modified_files(patch: &Patch) -> Vec<&str> {
    let mut seen = Vec::new();
    for e in &patch.edits {
        if !seen.contains(&e.file.as_str()) {
            seen.push(e.file.as_str());
        }
    }
    seen
}

/// Content hash identifying a patch by what it changes: the (file,
/// original, replaced) triples of its edits. Reason text does not
/// contribute.
pub fn patch_content_hash(patch: &Patch) -> String {
    let mut hasher = Sha256::new();
    for e in &patch.edits {
        for part in [&e.file, &e.original, &e.replaced] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

fn normalize_line(line: &str) -> &str {
    line.trim_end()
}

/// Snippet lines after newline normalization and per-line trailing
/// whitespace stripping; a single trailing newline is structural and
/// does not contribute an empty line.
fn snippet_lines(snippet: &str) -> Vec<&str> {
    let mut s = snippet;
    if let Some(stripped) = s.strip_suffix('\n') {
        s = stripped;
    }
    s.split('\n')
        .map(|l| normalize_line(l.strip_suffix('\r').unwrap_or(l)))
        .collect()
}

/// Byte span of each file line, terminator included, plus its
/// normalized form for comparison.
struct FileLine<'a> {
    start: usize,
    end: usize,
    norm: &'a str,
}

fn file_lines(content: &str) -> Vec<FileLine<'_>> {
    let mut lines = Vec::new();
    let mut start = 0;
    let bytes = content.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'\n' {
            let raw = &content[start..i];
            lines.push(FileLine {
                start,
                end: i + 1,
                norm: normalize_line(raw.strip_suffix('\r').unwrap_or(raw)),
            });
            start = i + 1;
        }
    }
    if start < content.len() {
        let raw = &content[start..];
        lines.push(FileLine {
            start,
            end: content.len(),
            norm: normalize_line(raw.strip_suffix('\r').unwrap_or(raw)),
        });
    }
    lines
}

/// Applies a single edit to file content held in memory.
pub fn apply_edit_to_text(content: &str, edit: &Edit) -> Result<String, PatchError> {
    apply_edit_indexed(content, edit, 0)
}

fn apply_edit_indexed(content: &str, edit: &Edit, index: usize) -> Result<String, PatchError> {
    if edit.original.trim().is_empty() {
        return Err(PatchError::EmptyOriginal { index });
    }
    let needle = snippet_lines(&edit.original);
    let lines = file_lines(content);
    let mut matches = Vec::new();
    if needle.len() <= lines.len() {
        for at in 0..=(lines.len() - needle.len()) {
            if (0..needle.len()).all(|k| lines[at + k].norm == needle[k]) {
                matches.push(at);
            }
        }
    }
    match matches.len() {
        0 => Err(PatchError::NoMatch {
            file: edit.file.clone(),
        }),
        1 => {
            let at = matches[0];
            let first = &lines[at];
            let last = &lines[at + needle.len() - 1];
            let removed = &content[first.start..last.end];
            let mut replacement = edit.replaced.clone();
            // Preserve the matched block's trailing-newline property.
            if removed.ends_with('\n') && !replacement.is_empty() && !replacement.ends_with('\n') {
                replacement.push('\n');
            }
            let mut out = String::with_capacity(content.len());
            out.push_str(&content[..first.start]);
            out.push_str(&replacement);
            out.push_str(&content[last.end..]);
            Ok(out)
        }
        n => Err(PatchError::AmbiguousMatch {
            file: edit.file.clone(),
            count: n,
        }),
    }
}

/// Applies a single edit to a file on disk.
pub fn apply_edit(workspace: &Path, edit: &Edit) -> Result<(), PatchError> {
    let path = workspace.join(&edit.file);
    if !path.is_file() {
        return Err(PatchError::FileMissing(edit.file.clone()));
    }
    let content = fs::read_to_string(&path).map_err(|e| PatchError::Io {
        file: edit.file.clone(),
        detail: e.to_string(),
    })?;
    let updated = apply_edit_to_text(&content, edit)?;
    fs::write(&path, updated).map_err(|e| PatchError::Io {
        file: edit.file.clone(),
        detail: e.to_string(),
    })
}

/// Applies every edit in order and returns the unified diff over the
/// modified files. Edits are staged in memory and written only after
/// all of them succeed, so a failure leaves the workspace untouched.
/// Later edits match against the results of earlier ones.
pub fn apply_patch(workspace: &Path, patch: &Patch) -> Result<String, PatchError> {
    if patch.edits.is_empty() {
        return Err(PatchError::EmptyPatch);
    }
    let mut originals: BTreeMap<String, String> = BTreeMap::new();
    let mut staged: BTreeMap<String, String> = BTreeMap::new();
    for (index, edit) in patch.edits.iter().enumerate() {
        if !staged.contains_key(&edit.file) {
            let path = workspace.join(&edit.file);
            if !path.is_file() {
                return Err(PatchError::FileMissing(edit.file.clone()));
            }
            let content = fs::read_to_string(&path).map_err(|e| PatchError::Io {
                file: edit.file.clone(),
                detail: e.to_string(),
            })?;
            originals.insert(edit.file.clone(), content.clone());
            staged.insert(edit.file.clone(), content);
        }
        let current = staged.get(&edit.file).expect("staged above");
        let updated = apply_edit_indexed(current, edit, index)?;
        staged.insert(edit.file.clone(), updated);
    }

    let mut diff = String::new();
    for file in modified_files(patch) {
        let before = &originals[file];
        let after = &staged[file];
        if before == after {
            continue;
        }
        diff.push_str(&unified_diff(file, before, after));
        fs::write(workspace.join(file), after).map_err(|e| PatchError::Io {
            file: file.to_string(),
            detail: e.to_string(),
        })?;
    }
    Ok(diff)
}
