//! Prompt assembly. Instruction text is byte-fixed in versioned
//! template assets, so identical contexts always produce identical
//! prompts.

use serde::{Deserialize, Serialize};

use crate::minimize::MinimizedTrace;
use crate::patch::Patch;
use crate::report::CrashReport;

pub const TEMPLATE_VERSION: &str = "v1";

const HYPOTHESIS_INSTRUCTIONS: &str = include_str!("../assets/hypothesis_instructions_v1.txt");
const HYPOTHESIS_EXECUTION_NOTE: &str = include_str!("../assets/hypothesis_execution_note_v1.txt");
const PATCH_INSTRUCTIONS: &str = include_str!("../assets/patch_instructions_v1.txt");
const HYPOTHESIS_SELECT: &str = include_str!("../assets/hypothesis_select_v1.txt");
const PATCH_SELECT: &str = include_str!("../assets/patch_select_v1.txt");

/// Everything a repair prompt is assembled from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairContext {
    pub bug_id: String,
    pub report: CrashReport,
    /// (relative path, exact file contents), in candidate order.
    pub candidate_files: Vec<(String, String)>,
    pub minimized_trace: Option<MinimizedTrace>,
}

fn push_issue(out: &mut String, report: &CrashReport) {
    out.push_str("<issue>\n");
    out.push_str(&report.raw_text);
    if !report.raw_text.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("</issue>\n\n");
}

fn push_code(out: &mut String, files: &[(String, String)]) {
    out.push_str("<code>\n");
    for (path, contents) in files {
        out.push_str(&format!("[start of {path}]\n"));
        out.push_str(contents);
        if !contents.is_empty() && !contents.ends_with('\n') {
            out.push('\n');
        }
        out.push_str(&format!("[end of {path}]\n"));
    }
    out.push_str("</code>\n\n");
}

fn push_execution(out: &mut String, trace: &MinimizedTrace) {
    out.push_str("<execution>\nCall Stack (from earliest to most recent):\n\n");
    for record in &trace.records {
        out.push_str(&record.func);
        out.push('\n');
    }
    out.push_str("</execution>\n\n");
}

/// Hypothesis-generation prompt. The `<execution>` block and the note
/// that refers to it are omitted when no trace is supplied.
pub fn assemble_hypothesis_prompt(ctx: &RepairContext) -> String {
    let mut out = String::new();
    push_issue(&mut out, &ctx.report);
    push_code(&mut out, &ctx.candidate_files);
    if let Some(trace) = &ctx.minimized_trace {
        push_execution(&mut out, trace);
    }
    out.push_str(HYPOTHESIS_INSTRUCTIONS);
    if ctx.minimized_trace.is_some() {
        out.push('\n');
        out.push_str(HYPOTHESIS_EXECUTION_NOTE);
    }
    out
}

/// Patch-generation prompt: context plus the selected hypothesis and
/// the modification-format instructions.
pub fn assemble_patch_prompt(ctx: &RepairContext, hypothesis: &str) -> String {
    let mut out = String::new();
    push_issue(&mut out, &ctx.report);
    push_code(&mut out, &ctx.candidate_files);
    if let Some(trace) = &ctx.minimized_trace {
        push_execution(&mut out, trace);
    }
    out.push_str("<solution>\n");
    out.push_str(hypothesis);
    if !hypothesis.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("</solution>\n\n");
    out.push_str(PATCH_INSTRUCTIONS);
    out
}

/// Self-reflection prompt over generated hypotheses.
pub fn assemble_hypothesis_select_prompt(ctx: &RepairContext, hypotheses: &[String]) -> String {
    let mut out = String::new();
    push_issue(&mut out, &ctx.report);
    push_code(&mut out, &ctx.candidate_files);
    if let Some(trace) = &ctx.minimized_trace {
        push_execution(&mut out, trace);
    }
    out.push_str(HYPOTHESIS_SELECT);
    out.push('\n');
    for (i, h) in hypotheses.iter().enumerate() {
        out.push_str(&format!("**Candidate {}**:\n<solution>\n", i + 1));
        out.push_str(h);
        if !h.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("</solution>\n\n");
    }
    out
}

/// Self-consistency prompt over compilable candidate patches.
pub fn assemble_patch_select_prompt(
    ctx: &RepairContext,
    hypothesis: &str,
    patches: &[Patch],
) -> String {
    let mut out = String::new();
    push_issue(&mut out, &ctx.report);
    push_code(&mut out, &ctx.candidate_files);
    if let Some(trace) = &ctx.minimized_trace {
        push_execution(&mut out, trace);
    }
    out.push_str("<solution>\n");
    out.push_str(hypothesis);
    if !hypothesis.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("</solution>\n\n");
    out.push_str(PATCH_SELECT);
    out.push('\n');
    for (i, p) in patches.iter().enumerate() {
        out.push_str(&format!("**Candidate {}**:\n", i + 1));
        out.push_str(&render_modifications(p));
        out.push('\n');
    }
    out
}

/// Renders a patch's edits in the modification grammar (without the
/// leading `<solution>` block).
pub fn render_modifications(patch: &Patch) -> String {
    let mut out = String::new();
    for (i, e) in patch.edits.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("// Modification {}\n", i + 1));
        out.push_str("<reason>\n");
        out.push_str(&e.reason);
        if !e.reason.is_empty() && !e.reason.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("</reason>\n<file>\n");
        out.push_str(&e.file);
        out.push_str("\n</file>\n<original>\n");
        out.push_str(&e.original);
        out.push_str("\n</original>\n<patched>\n");
        out.push_str(&e.replaced);
        out.push_str("\n</patched>\n");
    }
    out
}

/// Renders a full patch answer: restated solution plus fenced
/// modification blocks. Re-parsing the result yields an equal patch.
pub fn render_patch(patch: &Patch) -> String {
    let mut out = String::new();
    out.push_str("<solution>\n");
    out.push_str(&patch.solution_text);
    if !patch.solution_text.is_empty() && !patch.solution_text.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("</solution>\n\n```\n");
    out.push_str(&render_modifications(patch));
    out.push_str("```\n");
    out
}
