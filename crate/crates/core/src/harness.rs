//! Compile-check, incremental build, and reproducer-run services over
//! bug bundles.
//!
//! `warm_cache` performs one full baseline build and records a content
//! hash plus object artifact per source file. Later builds recompile
//! exactly the files whose hash differs from the cache and link the
//! fresh objects with cached ones. The compile check applies a patch to
//! a scratch copy and compiles only the modified files, with no link
//! step, so uncompilable candidates are filtered without touching the
//! cache.
//!
//! Crash detection is pattern-based: reproducer output matching any of
//! the bundle's crash patterns classifies the run as crashed, anything
//! else (clean exit or timeout) as resolved. When the process dies on a
//! signal the harness appends a `[harness] terminated by signal N` line
//! so bundles can match on it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bundle::BugBundle;
use crate::fsutil::{c_sources, copy_dir, flatten_rel_path, fresh_dir};
use crate::patch::{apply_patch, modified_files, patch_content_hash, Patch, PatchError};
use crate::report::{parse_crash_block, CrashReport, Frame};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("baseline build failed:\n{log}")]
    BaselineBuildFailed { log: String },
    #[error("build failed:\n{log}")]
    BuildFailed { log: String },
    #[error("failed to spawn `{command}`: {detail}")]
    Spawn { command: String, detail: String },
    #[error("i/o error at {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("patch could not be applied: {0}")]
    Patch(#[from] PatchError),
    #[error("no simulated outcome for patch hash {0} and no default configured")]
    UnknownPatch(String),
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

/// Cached baseline: per-file content hashes and object artifacts plus
/// the baseline binary.
#[derive(Debug)]
pub struct CacheHandle {
    pub bug_id: String,
    cache_dir: PathBuf,
    /// Pristine copy of the bundle workspace.
    src_dir: PathBuf,
    /// file -> (content hash, object artifact)
    objects: BTreeMap<String, CacheEntry>,
    pub baseline_binary: PathBuf,
    bundle: BugBundle,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    hash: String,
    object: PathBuf,
}

/// Result of a fast compile check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompileCheck {
    pub passed: bool,
    pub per_file: Vec<FileCheck>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileCheck {
    pub file: String,
    pub passed: bool,
    pub log: String,
}

/// A linked binary plus build accounting.
#[derive(Debug, Clone)]
pub struct BuildArtifact {
    pub binary: PathBuf,
    pub workspace: PathBuf,
    pub files_recompiled: usize,
}

/// Outcome classification of a reproducer run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReproduceOutcome {
    /// No crash pattern fired before clean exit or timeout.
    Resolved,
    Crashed {
        report: CrashReport,
        raw_output: String,
    },
}

fn hash_file(path: &Path) -> Result<String, HarnessError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&data);
    Ok(hex::encode(hasher.finalize()))
}

fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Exit codes `sh` reserves for "command not found" / "not executable";
/// these are infrastructure failures, not compile or crash verdicts.
const EXIT_NOT_EXECUTABLE: i32 = 126;
const EXIT_NOT_FOUND: i32 = 127;

fn run_command(command: &str, cwd: &Path) -> Result<(bool, String), HarnessError> {
    let output = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(cwd)
        .output()
        .map_err(|e| HarnessError::Spawn {
            command: command.to_string(),
            detail: e.to_string(),
        })?;
    let mut log = String::from_utf8_lossy(&output.stdout).into_owned();
    log.push_str(&String::from_utf8_lossy(&output.stderr));
    if matches!(output.status.code(), Some(EXIT_NOT_FOUND) | Some(EXIT_NOT_EXECUTABLE)) {
        return Err(HarnessError::Spawn {
            command: command.to_string(),
            detail: format!("exit {}: {}", output.status.code().unwrap(), log.trim()),
        });
    }
    Ok((output.status.success(), log))
}

/// Performs the one-time baseline build: every tracked `.c` file is
/// compiled to an object and the objects are linked into the baseline
/// binary, recording content hashes along the way.
pub fn warm_cache(bundle: &BugBundle, cache_dir: &Path) -> Result<CacheHandle, HarnessError> {
    let src_dir = cache_dir.join("src");
    let obj_dir = cache_dir.join("objects");
    fs::create_dir_all(&obj_dir).map_err(|e| io_err(&obj_dir, e))?;
    copy_dir(&bundle.workspace, &src_dir).map_err(|e| io_err(&src_dir, e))?;

    let files = c_sources(&src_dir).map_err(|e| io_err(&src_dir, e))?;
    let mut objects = BTreeMap::new();
    for file in &files {
        let object = obj_dir.join(format!("{}.o", flatten_rel_path(file)));
        let cmd = substitute(
            &bundle.commands.build.compile,
            &[
                ("file", file.as_str()),
                ("object", &object.display().to_string()),
                ("workspace", &src_dir.display().to_string()),
            ],
        );
        let (ok, log) = run_command(&cmd, &src_dir)?;
        if !ok {
            return Err(HarnessError::BaselineBuildFailed { log });
        }
        objects.insert(
            file.clone(),
            CacheEntry {
                hash: hash_file(&src_dir.join(file))?,
                object,
            },
        );
    }

    let baseline_binary = cache_dir.join("baseline_bin");
    let object_list: Vec<String> = objects
        .values()
        .map(|e| e.object.display().to_string())
        .collect();
    let cmd = substitute(
        &bundle.commands.build.link,
        &[
            ("objects", object_list.join(" ").as_str()),
            ("binary", &baseline_binary.display().to_string()),
            ("workspace", &src_dir.display().to_string()),
        ],
    );
    let (ok, log) = run_command(&cmd, &src_dir)?;
    if !ok {
        return Err(HarnessError::BaselineBuildFailed { log });
    }

    Ok(CacheHandle {
        bug_id: bundle.bug_id.clone(),
        cache_dir: cache_dir.to_path_buf(),
        src_dir,
        objects,
        baseline_binary,
        bundle: bundle.clone(),
    })
}

impl CacheHandle {
    /// The cached pristine workspace copy.
    pub fn src_dir(&self) -> &Path {
        &self.src_dir
    }

    /// Per-file content hashes recorded at warm time.
    pub fn file_hashes(&self) -> BTreeMap<String, String> {
        self.objects
            .iter()
            .map(|(k, v)| (k.clone(), v.hash.clone()))
            .collect()
    }

    /// Fast compilation check: applies the patch to a scratch copy of
    /// `workspace` and runs the per-file compile-check command for each
    /// modified file. No link step runs and no artifact is produced.
    pub fn check_compile(
        &self,
        workspace: &Path,
        patch: &Patch,
    ) -> Result<CompileCheck, HarnessError> {
        let started = Instant::now();
        let scratch = fresh_dir(&self.cache_dir.join("check"), "scratch_")
            .map_err(|e| io_err(&self.cache_dir, e))?;
        let result = self.check_compile_in(&scratch, workspace, patch, started);
        let _ = fs::remove_dir_all(&scratch);
        result
    }

    fn check_compile_in(
        &self,
        scratch: &Path,
        workspace: &Path,
        patch: &Patch,
        started: Instant,
    ) -> Result<CompileCheck, HarnessError> {
        copy_dir(workspace, scratch).map_err(|e| io_err(scratch, e))?;
        if let Err(e) = apply_patch(scratch, patch) {
            // A patch that cannot even be applied fails its first file.
            let file = patch
                .edits
                .first()
                .map(|ed| ed.file.clone())
                .unwrap_or_default();
            return Ok(CompileCheck {
                passed: false,
                per_file: vec![FileCheck {
                    file,
                    passed: false,
                    log: format!("patch application failed: {e}"),
                }],
                duration_ms: started.elapsed().as_millis() as u64,
            });
        }
        let mut per_file = Vec::new();
        let mut passed = true;
        for file in modified_files(patch) {
            let cmd = substitute(
                &self.bundle.commands.compile_check,
                &[
                    ("file", file),
                    ("workspace", &scratch.display().to_string()),
                ],
            );
            let (ok, log) = run_command(&cmd, scratch)?;
            passed &= ok;
            per_file.push(FileCheck {
                file: file.to_string(),
                passed: ok,
                log,
            });
        }
        Ok(CompileCheck {
            passed,
            per_file,
            duration_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Incremental build of a (possibly patched) workspace state:
    /// recompiles exactly the files whose content hash differs from the
    /// cache and links them with the cached objects.
    pub fn build(&self, workspace: &Path, out_dir: &Path) -> Result<BuildArtifact, HarnessError> {
        fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
        let files = c_sources(workspace).map_err(|e| io_err(workspace, e))?;
        let mut object_list = Vec::new();
        let mut files_recompiled = 0usize;
        for file in &files {
            let current_hash = hash_file(&workspace.join(file))?;
            let cached = self.objects.get(file);
            if let Some(entry) = cached {
                if entry.hash == current_hash {
                    object_list.push(entry.object.display().to_string());
                    continue;
                }
            }
            let object = out_dir.join(format!("{}.o", flatten_rel_path(file)));
            let cmd = substitute(
                &self.bundle.commands.build.compile,
                &[
                    ("file", file.as_str()),
                    ("object", &object.display().to_string()),
                    ("workspace", &workspace.display().to_string()),
                ],
            );
            let (ok, log) = run_command(&cmd, workspace)?;
            if !ok {
                return Err(HarnessError::BuildFailed { log });
            }
            files_recompiled += 1;
            object_list.push(object.display().to_string());
        }

        if files_recompiled == 0 {
            // Nothing changed relative to the baseline.
            return Ok(BuildArtifact {
                binary: self.baseline_binary.clone(),
                workspace: workspace.to_path_buf(),
                files_recompiled: 0,
            });
        }

        let binary = out_dir.join("bin");
        let cmd = substitute(
            &self.bundle.commands.build.link,
            &[
                ("objects", object_list.join(" ").as_str()),
                ("binary", &binary.display().to_string()),
                ("workspace", &workspace.display().to_string()),
            ],
        );
        let (ok, log) = run_command(&cmd, workspace)?;
        if !ok {
            return Err(HarnessError::BuildFailed { log });
        }
        Ok(BuildArtifact {
            binary,
            workspace: workspace.to_path_buf(),
            files_recompiled,
        })
    }
}

/// Runs the reproducer against a built artifact, classifying the run by
/// the bundle's crash patterns. The command sees `{binary}`,
/// `{workspace}` and `{trace_log}` substitutions and runs with the
/// artifact workspace as its working directory.
pub fn reproduce(
    artifact: &BuildArtifact,
    bundle: &BugBundle,
    trace_log: &Path,
) -> Result<ReproduceOutcome, HarnessError> {
    let command = substitute(
        &bundle.commands.reproduce,
        &[
            ("binary", &artifact.binary.display().to_string()),
            ("workspace", &artifact.workspace.display().to_string()),
            ("trace_log", &trace_log.display().to_string()),
        ],
    );
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(&command)
        .current_dir(&artifact.workspace)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // Run the reproducer in its own process group so a timeout kill
    // reaches grandchildren too; otherwise an orphan can hold the
    // output pipes open forever.
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd.spawn().map_err(|e| HarnessError::Spawn {
        command: command.clone(),
        detail: e.to_string(),
    })?;

    let deadline = Instant::now() + bundle.reproduce_timeout;
    let mut timed_out = false;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if Instant::now() >= deadline {
                    kill_process_group(&mut child);
                    timed_out = true;
                    break;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                return Err(HarnessError::Spawn {
                    command,
                    detail: e.to_string(),
                })
            }
        }
    }

    let mut output = String::new();
    if let Some(mut stdout) = child.stdout.take() {
        let _ = stdout.read_to_string(&mut output);
    }
    if let Some(mut stderr) = child.stderr.take() {
        let _ = stderr.read_to_string(&mut output);
    }
    if !timed_out {
        if let Ok(Some(status)) = child.try_wait() {
            if let Some(signal) = unix_signal(&status) {
                output.push_str(&format!("\n[harness] terminated by signal {signal}\n"));
            }
            if matches!(
                status.code(),
                Some(EXIT_NOT_FOUND) | Some(EXIT_NOT_EXECUTABLE)
            ) {
                return Err(HarnessError::Spawn {
                    command,
                    detail: format!("exit {}: {}", status.code().unwrap(), output.trim()),
                });
            }
        }
    }

    for pattern in &bundle.crash_patterns {
        if pattern.regex.is_match(&output) {
            let (bug_type, frames) = match parse_crash_block(&output) {
                Some((_, frames)) if !frames.is_empty() => (pattern.name.clone(), frames),
                _ => (
                    pattern.name.clone(),
                    vec![Frame::new("unknown", None)],
                ),
            };
            return Ok(ReproduceOutcome::Crashed {
                report: CrashReport {
                    bug_type,
                    frames,
                    raw_text: output.clone(),
                },
                raw_output: output,
            });
        }
    }
    Ok(ReproduceOutcome::Resolved)
}

#[cfg(unix)]
fn unix_signal(status: &std::process::ExitStatus) -> Option<i32> {
    use std::os::unix::process::ExitStatusExt;
    status.signal()
}

#[cfg(not(unix))]
fn unix_signal(_status: &std::process::ExitStatus) -> Option<i32> {
    None
}

/// Kills the child's whole process group, then reaps the child.
fn kill_process_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        let pgid = child.id() as i32;
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Outcome of building and reproducing one patched workspace.
#[derive(Debug, Clone)]
pub enum ValidationOutcome {
    /// Full build failed after the per-file check (e.g. at link time).
    BuildFailed { log: String },
    Ran {
        outcome: ReproduceOutcome,
        files_recompiled: usize,
    },
}

/// The seam between the debug search and the build infrastructure.
/// `current_report` carries the crash the cycle started from so
/// simulated implementations can echo it back.
pub trait RepairHarness: Send + Sync {
    fn check_compile(&self, workspace: &Path, patch: &Patch) -> Result<CompileCheck, HarnessError>;
    fn validate(
        &self,
        workspace: &Path,
        patch: &Patch,
        current_report: &CrashReport,
    ) -> Result<ValidationOutcome, HarnessError>;
}

/// Real harness over a warmed cache.
pub struct BundleHarness {
    pub cache: CacheHandle,
    pub bundle: BugBundle,
    /// Where reproduce runs point `{trace_log}`.
    pub trace_log: PathBuf,
    build_root: PathBuf,
}

impl BundleHarness {
    pub fn new(cache: CacheHandle, bundle: BugBundle, trace_log: PathBuf, build_root: PathBuf) -> Self {
        BundleHarness {
            cache,
            bundle,
            trace_log,
            build_root,
        }
    }
}

impl RepairHarness for BundleHarness {
    fn check_compile(&self, workspace: &Path, patch: &Patch) -> Result<CompileCheck, HarnessError> {
        self.cache.check_compile(workspace, patch)
    }

    fn validate(
        &self,
        workspace: &Path,
        _patch: &Patch,
        _current_report: &CrashReport,
    ) -> Result<ValidationOutcome, HarnessError> {
        let out_dir = fresh_dir(&self.build_root, "build_")
            .map_err(|e| io_err(&self.build_root, e))?;
        let artifact = match self.cache.build(workspace, &out_dir) {
            Ok(a) => a,
            Err(HarnessError::BuildFailed { log }) => {
                return Ok(ValidationOutcome::BuildFailed { log })
            }
            Err(e) => return Err(e),
        };
        let outcome = reproduce(&artifact, &self.bundle, &self.trace_log)?;
        Ok(ValidationOutcome::Ran {
            outcome,
            files_recompiled: artifact.files_recompiled,
        })
    }
}

/// Deterministic test double keyed by patch content hash.
#[derive(Debug, Clone, Default)]
pub struct SimulatedHarness {
    scenarios: BTreeMap<String, SimScenario>,
    default: Option<SimScenario>,
}

/// What the simulated harness reports for one patch.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub compiles: bool,
    pub build_ok: bool,
    pub reproduce: SimReproduce,
}

#[derive(Debug, Clone)]
pub enum SimReproduce {
    Resolved,
    /// Crash persists with the same report the cycle started from.
    SameCrash,
    /// Crash persists with a replacement report.
    NewCrash(CrashReport),
}

impl SimScenario {
    pub fn resolved() -> Self {
        SimScenario {
            compiles: true,
            build_ok: true,
            reproduce: SimReproduce::Resolved,
        }
    }

    pub fn crash_persists() -> Self {
        SimScenario {
            compiles: true,
            build_ok: true,
            reproduce: SimReproduce::SameCrash,
        }
    }

    pub fn uncompilable() -> Self {
        SimScenario {
            compiles: false,
            build_ok: false,
            reproduce: SimReproduce::SameCrash,
        }
    }
}

impl SimulatedHarness {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, scenario: SimScenario) -> Self {
        self.default = Some(scenario);
        self
    }

    /// Registers the scenario for a patch (keyed by content hash).
    pub fn with_patch(mut self, patch: &Patch, scenario: SimScenario) -> Self {
        self.scenarios.insert(patch_content_hash(patch), scenario);
        self
    }

    fn scenario_for(&self, patch: &Patch) -> Result<&SimScenario, HarnessError> {
        let hash = patch_content_hash(patch);
        self.scenarios
            .get(&hash)
            .or(self.default.as_ref())
            .ok_or(HarnessError::UnknownPatch(hash))
    }
}

impl RepairHarness for SimulatedHarness {
    fn check_compile(&self, _workspace: &Path, patch: &Patch) -> Result<CompileCheck, HarnessError> {
        let scenario = self.scenario_for(patch)?;
        Ok(CompileCheck {
            passed: scenario.compiles,
            per_file: modified_files(patch)
                .into_iter()
                .map(|file| FileCheck {
                    file: file.to_string(),
                    passed: scenario.compiles,
                    log: String::new(),
                })
                .collect(),
            duration_ms: 0,
        })
    }

    fn validate(
        &self,
        _workspace: &Path,
        patch: &Patch,
        current_report: &CrashReport,
    ) -> Result<ValidationOutcome, HarnessError> {
        let scenario = self.scenario_for(patch)?;
        if !scenario.build_ok {
            return Ok(ValidationOutcome::BuildFailed {
                log: "simulated build failure".into(),
            });
        }
        let outcome = match &scenario.reproduce {
            SimReproduce::Resolved => ReproduceOutcome::Resolved,
            SimReproduce::SameCrash => ReproduceOutcome::Crashed {
                report: current_report.clone(),
                raw_output: current_report.raw_text.clone(),
            },
            SimReproduce::NewCrash(report) => ReproduceOutcome::Crashed {
                report: report.clone(),
                raw_output: report.raw_text.clone(),
            },
        };
        Ok(ValidationOutcome::Ran {
            outcome,
            files_recompiled: 0,
        })
    }
}
