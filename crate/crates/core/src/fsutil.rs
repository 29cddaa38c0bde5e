//! Small filesystem helpers shared by the harness and instrumenter.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

/// Recursively copies `src` into `dest`, creating `dest` if needed.
pub fn copy_dir(src: &Path, dest: &Path) -> io::Result<()> {
    for entry in WalkDir::new(src).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        let rel = entry
            .path()
            .strip_prefix(src)
            .map_err(io::Error::other)?;
        let target = dest.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target)?;
        } else if entry.file_type().is_file() {
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Relative paths of `.c` files under `root`, sorted for determinism.
pub fn c_sources(root: &Path) -> io::Result<Vec<String>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        if entry.path().extension().and_then(|e| e.to_str()) == Some("c") {
            let rel = entry
                .path()
                .strip_prefix(root)
                .map_err(io::Error::other)?;
            files.push(path_to_slash(rel));
        }
    }
    files.sort();
    Ok(files)
}

/// Renders a relative path with `/` separators (bundle manifests and
/// trace lines use slash paths on every platform).
pub fn path_to_slash(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Flattens a relative path into a single file name usable in an
/// object-store directory (`src/a.c` -> `src__a.c`).
pub fn flatten_rel_path(rel: &str) -> String {
    rel.replace('/', "__")
}

/// Creates a unique subdirectory under `base`.
pub fn fresh_dir(base: &Path, prefix: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(base)?;
    for i in 0.. {
        let candidate = base.join(format!("{prefix}{i}"));
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copies_nested_tree() {
        let src = tempfile::tempdir().unwrap();
        fs::create_dir_all(src.path().join("sub")).unwrap();
        fs::write(src.path().join("a.c"), "a").unwrap();
        fs::write(src.path().join("sub/b.c"), "b").unwrap();
        let dest = tempfile::tempdir().unwrap();
        copy_dir(src.path(), dest.path()).unwrap();
        assert_eq!(fs::read_to_string(dest.path().join("a.c")).unwrap(), "a");
        assert_eq!(fs::read_to_string(dest.path().join("sub/b.c")).unwrap(), "b");
    }

    #[test]
    fn lists_c_sources_sorted() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("z")).unwrap();
        fs::write(dir.path().join("z/late.c"), "").unwrap();
        fs::write(dir.path().join("early.c"), "").unwrap();
        fs::write(dir.path().join("skip.h"), "").unwrap();
        assert_eq!(c_sources(dir.path()).unwrap(), vec!["early.c", "z/late.c"]);
    }
}
