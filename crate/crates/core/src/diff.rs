//! Unified diff rendering in standard `---/+++/@@` form with 3 context
//! lines.

use similar::TextDiff;

/// Renders the unified diff of one file, with `a/`-`b/` headers.
/// Identical inputs produce an empty string.
pub fn unified_diff(path: &str, before: &str, after: &str) -> String {
    if before == after {
        return String::new();
    }
    TextDiff::from_lines(before, after)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{path}"), &format!("b/{path}"))
        .to_string()
}

/// Number of `@@` hunks in a diff text.
pub fn hunk_count(diff: &str) -> usize {
    diff.lines().filter(|l| l.starts_with("@@")).count()
}
