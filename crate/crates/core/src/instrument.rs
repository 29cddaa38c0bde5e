//! Function-entry instrumentation for toy C sources.
//!
//! A function definition is recognized with a brace-depth heuristic: an
//! identifier followed by a parameter list at file scope, whose `)` is
//! directly followed by `{`. Each recognized body gets a call to an
//! injected logging helper as its first statement; the helper appends
//! one canonical trace line (`pid file func`) to the log path with an
//! unbuffered open/write/close per call so a crashing process cannot
//! lose the suffix of its trace. K&R-style definitions and tokens
//! between the parameter list and the body are unsupported and reported
//! as instrumentation failures.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

const HELPER_HEADER: &str = "__trace_probe.h";

const C_KEYWORDS: &[&str] = &[
    "if", "for", "while", "switch", "return", "sizeof", "do", "else", "case",
];

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("candidate file not found in workspace: {0}")]
    CandidateMissing(String),
    #[error("cannot instrument {path}: {reason}")]
    InstrumentationFailed { path: String, reason: String },
    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
}

/// An instrumented copy of a workspace.
#[derive(Debug)]
pub struct InstrumentedWorkspace {
    pub root: PathBuf,
    /// (candidate file, function) pairs that were instrumented.
    pub functions: Vec<(String, String)>,
    pub log_path: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> InstrumentError {
    InstrumentError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

/// Copies `workspace` to `dest` and instruments every function
/// definition in the candidate files with a trace call logging to
/// `log_path`. Non-candidate files are copied unchanged; one helper
/// header is added at the destination root.
pub fn instrument_c_sources(
    workspace: &Path,
    candidates: &[String],
    log_path: &Path,
    dest: &Path,
) -> Result<InstrumentedWorkspace, InstrumentError> {
    for candidate in candidates {
        if !workspace.join(candidate).is_file() {
            return Err(InstrumentError::CandidateMissing(candidate.clone()));
        }
    }
    crate::fsutil::copy_dir(workspace, dest).map_err(|e| io_err(dest, e))?;

    let mut functions = Vec::new();
    for candidate in candidates {
        let path = dest.join(candidate);
        let content = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let (instrumented, funcs) = instrument_source(&content, candidate)?;
        fs::write(&path, instrumented).map_err(|e| io_err(&path, e))?;
        functions.extend(funcs.into_iter().map(|f| (candidate.clone(), f)));
    }

    let header_path = dest.join(HELPER_HEADER);
    fs::write(&header_path, helper_header(log_path)).map_err(|e| io_err(&header_path, e))?;

    Ok(InstrumentedWorkspace {
        root: dest.to_path_buf(),
        functions,
        log_path: log_path.to_path_buf(),
    })
}

fn c_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn helper_header(log_path: &Path) -> String {
    format!(
        "#ifndef TRACE_PROBE_H\n\
         #define TRACE_PROBE_H\n\
         #include <stdio.h>\n\
         #include <unistd.h>\n\
         static void __trace_probe(const char *file, const char *func) {{\n\
         \tFILE *log = fopen(\"{}\", \"a\");\n\
         \tif (log) {{\n\
         \t\tfprintf(log, \"%d %s %s\\n\", (int)getpid(), file, func);\n\
         \t\tfclose(log);\n\
         \t}}\n\
         }}\n\
         #endif\n",
        c_escape(&log_path.display().to_string())
    )
}

/// Include path from a candidate file back up to the workspace root.
fn include_prefix(candidate: &str) -> String {
    let depth = Path::new(candidate).components().count().saturating_sub(1);
    "../".repeat(depth)
}

/// Positions of function bodies in C source at file scope.
struct Scanner<'a> {
    src: &'a [u8],
    pos: usize,
    depth: i32,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Self {
        Scanner {
            src: src.as_bytes(),
            pos: 0,
            depth: 0,
        }
    }

    fn skip_line(&mut self) {
        while self.pos < self.src.len() {
            let b = self.src[self.pos];
            if b == b'\\' && self.pos + 1 < self.src.len() && self.src[self.pos + 1] == b'\n' {
                self.pos += 2;
                continue;
            }
            self.pos += 1;
            if b == b'\n' {
                break;
            }
        }
    }

    fn skip_block_comment(&mut self) -> Result<(), String> {
        self.pos += 2;
        while self.pos + 1 < self.src.len() {
            if self.src[self.pos] == b'*' && self.src[self.pos + 1] == b'/' {
                self.pos += 2;
                return Ok(());
            }
            self.pos += 1;
        }
        Err("unterminated block comment".into())
    }

    fn skip_string(&mut self, quote: u8) -> Result<(), String> {
        self.pos += 1;
        while self.pos < self.src.len() {
            let b = self.src[self.pos];
            if b == b'\\' {
                self.pos += 2;
                continue;
            }
            self.pos += 1;
            if b == quote {
                return Ok(());
            }
        }
        Err("unterminated string or character literal".into())
    }
}

/// Returns the instrumented source plus the names of instrumented
/// functions, in definition order.
fn instrument_source(src: &str, path: &str) -> Result<(String, Vec<String>), InstrumentError> {
    let fail = |reason: String| InstrumentError::InstrumentationFailed {
        path: path.to_string(),
        reason,
    };

    // (byte offset just after the body `{`, function name)
    let mut insertions: Vec<(usize, String)> = Vec::new();
    let mut s = Scanner::new(src);
    let bytes = src.as_bytes();
    // Identifier immediately before the current position, if any.
    let mut last_ident: Option<(usize, usize)> = None;
    // Set when an `=` was seen at file scope since the last statement
    // boundary; parens after it belong to an initializer expression.
    let mut in_initializer = false;

    while s.pos < bytes.len() {
        let b = bytes[s.pos];
        match b {
            b'#' if at_line_start(bytes, s.pos) => {
                s.skip_line();
                last_ident = None;
            }
            b'/' if s.pos + 1 < bytes.len() && bytes[s.pos + 1] == b'/' => s.skip_line(),
            b'/' if s.pos + 1 < bytes.len() && bytes[s.pos + 1] == b'*' => {
                s.skip_block_comment().map_err(&fail)?;
            }
            b'"' | b'\'' => {
                s.skip_string(b).map_err(&fail)?;
                last_ident = None;
            }
            b'{' => {
                s.depth += 1;
                s.pos += 1;
                last_ident = None;
            }
            b'}' => {
                s.depth -= 1;
                s.pos += 1;
                last_ident = None;
                if s.depth == 0 {
                    in_initializer = false;
                }
            }
            b';' | b',' => {
                s.pos += 1;
                last_ident = None;
                if s.depth == 0 && b == b';' {
                    in_initializer = false;
                }
            }
            b'=' => {
                if s.depth == 0
                    && !(s.pos + 1 < bytes.len() && bytes[s.pos + 1] == b'=')
                    && !(s.pos > 0 && matches!(bytes[s.pos - 1], b'=' | b'!' | b'<' | b'>'))
                {
                    in_initializer = true;
                }
                s.pos += 1;
                last_ident = None;
            }
            b'(' if s.depth == 0 => {
                let ident = last_ident;
                let close = match_paren(&mut s, src, path)?;
                last_ident = None;
                let Some((istart, iend)) = ident else {
                    continue;
                };
                let name = &src[istart..iend];
                if C_KEYWORDS.contains(&name) || in_initializer {
                    continue;
                }
                // Look at what sits between `)` and the next `{` or `;`.
                match body_after_params(src, close) {
                    BodyLookahead::Body(brace_pos) => {
                        insertions.push((brace_pos + 1, name.to_string()));
                        s.pos = brace_pos + 1;
                        s.depth += 1;
                    }
                    BodyLookahead::Declaration => {}
                    BodyLookahead::Unsupported(tokens) => {
                        return Err(fail(format!(
                            "unsupported tokens between parameter list and body of `{name}`: `{tokens}` \
                             (K&R definitions and attributes are not supported)"
                        )));
                    }
                    BodyLookahead::Eof => {}
                }
            }
            _ if is_ident_start(b) => {
                let start = s.pos;
                while s.pos < bytes.len() && is_ident_continue(bytes[s.pos]) {
                    s.pos += 1;
                }
                last_ident = Some((start, s.pos));
            }
            _ => {
                if !b.is_ascii_whitespace() && b != b'*' && b != b'&' {
                    last_ident = None;
                }
                s.pos += 1;
            }
        }
    }
    if s.depth != 0 {
        return Err(fail(format!("unbalanced braces (depth {} at end of file)", s.depth)));
    }

    let mut out = String::with_capacity(src.len() + 256);
    out.push_str(&format!(
        "#include \"{}{}\"\n",
        include_prefix(path),
        HELPER_HEADER
    ));
    let mut cursor = 0;
    let mut names = Vec::new();
    for (offset, name) in insertions {
        out.push_str(&src[cursor..offset]);
        out.push_str(&format!(
            "\n\t__trace_probe(\"{}\", \"{}\");",
            c_escape(path),
            c_escape(&name)
        ));
        cursor = offset;
        names.push(name);
    }
    out.push_str(&src[cursor..]);
    Ok((out, names))
}

fn at_line_start(bytes: &[u8], pos: usize) -> bool {
    let mut i = pos;
    while i > 0 {
        let b = bytes[i - 1];
        if b == b'\n' {
            return true;
        }
        if !matches!(b, b' ' | b'\t') {
            return false;
        }
        i -= 1;
    }
    true
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Advances the scanner past a balanced parameter list starting at `(`.
/// Returns the byte offset of the matching `)`.
fn match_paren(s: &mut Scanner<'_>, src: &str, path: &str) -> Result<usize, InstrumentError> {
    let bytes = src.as_bytes();
    let fail = |reason: String| InstrumentError::InstrumentationFailed {
        path: path.to_string(),
        reason,
    };
    let mut level = 0i32;
    while s.pos < bytes.len() {
        match bytes[s.pos] {
            b'(' => {
                level += 1;
                s.pos += 1;
            }
            b')' => {
                level -= 1;
                s.pos += 1;
                if level == 0 {
                    return Ok(s.pos - 1);
                }
            }
            b'"' | b'\'' => s.skip_string(bytes[s.pos]).map_err(&fail)?,
            b'/' if s.pos + 1 < bytes.len() && bytes[s.pos + 1] == b'/' => s.skip_line(),
            b'/' if s.pos + 1 < bytes.len() && bytes[s.pos + 1] == b'*' => {
                s.skip_block_comment().map_err(&fail)?
            }
            _ => s.pos += 1,
        }
    }
    Err(fail("unbalanced parentheses".into()))
}

enum BodyLookahead {
    /// Offset of the body's `{`.
    Body(usize),
    Declaration,
    Unsupported(String),
    Eof,
}

/// Classifies what follows a parameter list by its first significant
/// character: `{` opens a body, an identifier means K&R declarations or
/// attribute tokens (unsupported), anything else is a declaration or
/// expression context to skip.
fn body_after_params(src: &str, close_paren: usize) -> BodyLookahead {
    let bytes = src.as_bytes();
    let mut i = close_paren + 1;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b == b'/' && i + 1 < bytes.len() && bytes[i + 1] == b'/' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if b == b'/' && i + 1 < bytes.len() && bytes[i + 1] == b'*' {
            i += 2;
            while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                i += 1;
            }
            i += 2;
            continue;
        }
        if b == b'{' {
            return BodyLookahead::Body(i);
        }
        if is_ident_start(b) {
            let start = i;
            while i < bytes.len() && is_ident_continue(bytes[i]) {
                i += 1;
            }
            return BodyLookahead::Unsupported(src[start..i].to_string());
        }
        return BodyLookahead::Declaration;
    }
    BodyLookahead::Eof
}
