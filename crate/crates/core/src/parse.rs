//! Parsers for model responses: `<solution>` blocks, `<choice>` tags,
//! and the modification grammar. Every input yields a value or a typed
//! error; nothing here panics on malformed text.

use thiserror::Error;

use crate::patch::{Edit, Patch};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResponseParseError {
    #[error("response has no <solution> tag")]
    MissingSolutionTag,
    #[error("unbalanced <{0}> tag")]
    UnbalancedTags(&'static str),
    #[error("response has no `// Modification` blocks")]
    NoModifications,
    #[error("modification {block} is missing its <{tag}> tag")]
    MissingTag { block: usize, tag: &'static str },
    #[error("response has no <choice> tag")]
    MissingChoiceTag,
    #[error("invalid <choice> value: {0}")]
    InvalidChoice(String),
}

fn tag_inner<'a>(
    text: &'a str,
    tag: &'static str,
) -> Result<Option<(&'a str, usize)>, ResponseParseError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let Some(start) = text.find(&open) else {
        return Ok(None);
    };
    let body_start = start + open.len();
    let Some(rel_end) = text[body_start..].find(&close) else {
        return Err(ResponseParseError::UnbalancedTags(tag));
    };
    Ok(Some((
        &text[body_start..body_start + rel_end],
        body_start + rel_end + close.len(),
    )))
}

/// Strips one structural newline from each end of a tag body so that
/// tags on their own lines do not contribute to the snippet, while all
/// interior whitespace is preserved exactly.
fn strip_structural_newlines(s: &str) -> &str {
    let s = s.strip_prefix("\r\n").or_else(|| s.strip_prefix('\n')).unwrap_or(s);
    s.strip_suffix("\r\n")
        .or_else(|| s.strip_suffix('\n'))
        .unwrap_or(s)
}

/// Text between the first `<solution>` and its closing tag, trimmed.
pub fn parse_solution(response: &str) -> Result<String, ResponseParseError> {
    match tag_inner(response, "solution")? {
        Some((inner, _)) => Ok(inner.trim().to_string()),
        None => Err(ResponseParseError::MissingSolutionTag),
    }
}

/// Parses a `<choice>k</choice>` answer; returns the 0-based index.
pub fn parse_choice(response: &str, candidates: usize) -> Result<usize, ResponseParseError> {
    let Some((inner, _)) = tag_inner(response, "choice")? else {
        return Err(ResponseParseError::MissingChoiceTag);
    };
    let value: usize = inner
        .trim()
        .parse()
        .map_err(|_| ResponseParseError::InvalidChoice(inner.trim().to_string()))?;
    if value < 1 || value > candidates {
        return Err(ResponseParseError::InvalidChoice(value.to_string()));
    }
    Ok(value - 1)
}

fn is_fence(line: &str) -> bool {
    let t = line.trim();
    t.starts_with("```")
}

/// Extracts the next `<tag>...</tag>` body from `rest`, advancing it
/// past the closing tag so tags are consumed in order.
fn grab_tag<'a>(
    rest: &mut &'a str,
    tag: &'static str,
    block_no: usize,
) -> Result<&'a str, ResponseParseError> {
    match tag_inner(rest, tag)? {
        Some((inner, consumed)) => {
            *rest = &rest[consumed..];
            Ok(inner)
        }
        None => Err(ResponseParseError::MissingTag {
            block: block_no,
            tag,
        }),
    }
}

/// Parses a patch-generation response in the modification grammar.
///
/// An optional leading `<solution>` block becomes `solution_text`;
/// every block introduced by a line starting `// Modification` yields
/// one edit from its `<reason>`, `<file>`, `<original>`, `<patched>`
/// tag pairs, in that order. Code fences around the blocks are
/// ignored. Snippet whitespace inside `<original>`/`<patched>` is
/// preserved exactly.
pub fn parse_modifications(response: &str) -> Result<Patch, ResponseParseError> {
    // Split into the preamble and `// Modification` blocks, dropping
    // fence lines that sit between tag pairs.
    let mut preamble = String::new();
    let mut blocks: Vec<String> = Vec::new();
    let mut open_tag: Option<&'static str> = None;
    for line in response.lines() {
        if open_tag.is_none() {
            if is_fence(line) {
                continue;
            }
            if line.trim_start().starts_with("// Modification") {
                blocks.push(String::new());
                continue;
            }
        }
        let sink = match blocks.last_mut() {
            Some(b) => b,
            None => &mut preamble,
        };
        sink.push_str(line);
        sink.push('\n');
        // Track whether the cursor is inside a snippet tag so fences
        // within snippets are kept verbatim.
        for tag in ["reason", "file", "original", "patched"] {
            if let Some(current) = open_tag {
                if current == tag && line.contains(&format!("</{tag}>")) {
                    open_tag = None;
                }
            } else if line.contains(&format!("<{tag}>"))
                && !line.contains(&format!("</{tag}>"))
            {
                open_tag = Some(match tag {
                    "reason" => "reason",
                    "file" => "file",
                    "original" => "original",
                    _ => "patched",
                });
            }
        }
    }

    if blocks.is_empty() {
        return Err(ResponseParseError::NoModifications);
    }

    let solution_text = match tag_inner(&preamble, "solution")? {
        Some((inner, _)) => inner.trim().to_string(),
        None => String::new(),
    };

    let mut edits = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let block_no = i + 1;
        let mut rest: &str = block;
        let reason = grab_tag(&mut rest, "reason", block_no)?.trim().to_string();
        let file = grab_tag(&mut rest, "file", block_no)?.trim().to_string();
        let original = strip_structural_newlines(grab_tag(&mut rest, "original", block_no)?)
            .to_string();
        let replaced = strip_structural_newlines(grab_tag(&mut rest, "patched", block_no)?)
            .to_string();
        edits.push(Edit {
            file,
            original,
            replaced,
            reason,
        });
    }

    Ok(Patch {
        solution_text,
        edits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::render_patch;

    #[test]
    fn solution_extracts_inner_text() {
        assert_eq!(
            parse_solution("pre <solution> fix it </solution> post").unwrap(),
            "fix it"
        );
    }

    #[test]
    fn solution_from_template_worked_answer() {
        // The instruction template's own worked answer parses like any
        // other response.
        let template = include_str!("../assets/hypothesis_instructions_v1.txt");
        let answer = &template[template.find("**Answer of Example**").unwrap()..];
        let solution = parse_solution(answer).unwrap();
        assert!(solution.starts_with("The snippet should calculate"));
        assert!(solution.ends_with("instead of `sum-1`."));
    }

    #[test]
    fn modifications_from_sample_answer_shape() {
        let template = include_str!("../assets/patch_instructions_v1.txt");
        let answer = &template[template.find("**Sample Answer:**").unwrap()..];
        let patch = parse_modifications(answer).unwrap();
        assert_eq!(patch.edits.len(), 2);
        assert!(patch.solution_text.starts_with("The snippet should calculate"));
        assert_eq!(patch.edits[0].file, "dir_X/dir_Y/script.c");
        assert!(patch.edits[0].replaced.contains("sum += var;"));
        assert!(patch.edits[1].original.contains("sum -= 3;"));
    }

    #[test]
    fn solution_missing_tag() {
        assert_eq!(
            parse_solution("no tags").unwrap_err(),
            ResponseParseError::MissingSolutionTag
        );
    }

    #[test]
    fn solution_unbalanced() {
        assert_eq!(
            parse_solution("<solution> dangling").unwrap_err(),
            ResponseParseError::UnbalancedTags("solution")
        );
    }

    #[test]
    fn choice_parses_one_based() {
        assert_eq!(parse_choice("I pick <choice>2</choice>", 3).unwrap(), 1);
    }

    #[test]
    fn choice_out_of_range() {
        assert!(matches!(
            parse_choice("<choice>4</choice>", 3).unwrap_err(),
            ResponseParseError::InvalidChoice(_)
        ));
    }

    #[test]
    fn choice_missing() {
        assert_eq!(
            parse_choice("hmm", 3).unwrap_err(),
            ResponseParseError::MissingChoiceTag
        );
    }

    #[test]
    fn modifications_two_blocks() {
        let text = "<solution>\nplan\n</solution>\n\n```\n// Modification 1\n<reason>\nr1\n</reason>\n<file>\na.c\n</file>\n<original>\n    x = 1;\n</original>\n<patched>\n    x = 2;\n</patched>\n\n// Modification 2\n<reason>\nr2\n</reason>\n<file>\nb.c\n</file>\n<original>\ny\n</original>\n<patched>\nz\n</patched>\n```\n";
        let p = parse_modifications(text).unwrap();
        assert_eq!(p.solution_text, "plan");
        assert_eq!(p.edits.len(), 2);
        assert_eq!(p.edits[0].original, "    x = 1;");
        assert_eq!(p.edits[0].replaced, "    x = 2;");
        assert_eq!(p.edits[1].file, "b.c");
    }

    #[test]
    fn tags_without_header_is_no_modifications() {
        let text = "<reason>\nr\n</reason>\n<file>\nf\n</file>\n<original>\no\n</original>\n<patched>\np\n</patched>\n";
        assert_eq!(
            parse_modifications(text).unwrap_err(),
            ResponseParseError::NoModifications
        );
    }

    #[test]
    fn missing_patched_tag() {
        let text = "// Modification 1\n<reason>\nr\n</reason>\n<file>\nf\n</file>\n<original>\no\n</original>\n";
        assert_eq!(
            parse_modifications(text).unwrap_err(),
            ResponseParseError::MissingTag {
                block: 1,
                tag: "patched"
            }
        );
    }

    #[test]
    fn snippet_whitespace_preserved() {
        let text = "// Modification 1\n<reason>\nr\n</reason>\n<file>\nf\n</file>\n<original>\n\tindent\n  second  line\n</original>\n<patched>\nnew\n</patched>\n";
        let p = parse_modifications(text).unwrap();
        assert_eq!(p.edits[0].original, "\tindent\n  second  line");
    }

    #[test]
    fn grammar_round_trips() {
        let patch = Patch {
            solution_text: "restated plan".into(),
            edits: vec![
                Edit {
                    file: "dir/a.c".into(),
                    original: "    if (x) {\n        y();\n    }".into(),
                    replaced: "    if (x && z) {\n        y();\n    }".into(),
                    reason: "guard z".into(),
                },
                Edit {
                    file: "b.c".into(),
                    original: "old".into(),
                    replaced: "".into(),
                    reason: "".into(),
                },
            ],
        };
        let parsed = parse_modifications(&render_patch(&patch)).unwrap();
        assert_eq!(parsed, patch);
    }
}
