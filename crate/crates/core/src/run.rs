//! Full repair campaigns: warm the cache, optionally collect and
//! minimize an execution trace, run the debug forest, write the report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, CallCounts};
use crate::bundle::{BugBundle, BundleError};
use crate::harness::{reproduce, warm_cache, BundleHarness, HarnessError, ReproduceOutcome};
use crate::instrument::instrument_c_sources;
use crate::minimize::{minimize, MinimizedTrace, MinimizerConfig};
use crate::prompt::TEMPLATE_VERSION;
use crate::search::{run_forest, ForestConfig, NodeRecord, SearchDeps, WinningNode};
use crate::trace::{parse_trace, serialize_trace, Trace};

pub const REPORT_FILE_NAME: &str = "forest_report.json";

/// One campaign's configuration, loadable from a JSON file. Relative
/// paths resolve against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub bundle: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub forest: ForestConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub minimizer: MinimizerConfig,
    #[serde(default = "default_true")]
    pub use_execution_trace: bool,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    /// Loads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CampaignError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
            CampaignError::Config(format!("cannot parse config {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.bundle.is_relative() {
            self.bundle = base.join(&self.bundle);
        }
        if self.out.is_relative() {
            self.out = base.join(&self.out);
        }
        if !self.backend.fixture.is_empty() && Path::new(&self.backend.fixture).is_relative() {
            self.backend.fixture = base.join(&self.backend.fixture).display().to_string();
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    /// Configuration or bundle problems; usage-level failures.
    #[error("{0}")]
    Config(String),
    /// Failures while running the campaign.
    #[error("{0}")]
    Task(String),
}

impl From<BundleError> for CampaignError {
    fn from(e: BundleError) -> Self {
        CampaignError::Config(e.to_string())
    }
}

impl From<HarnessError> for CampaignError {
    fn from(e: HarnessError) -> Self {
        CampaignError::Task(e.to_string())
    }
}

/// The self-contained campaign report written to `forest_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestReport {
    pub bug_id: String,
    pub template_version: String,
    pub backend: String,
    pub use_execution_trace: bool,
    /// Records in the minimized trace fed to prompts, when one exists.
    pub trace_records: Option<usize>,
    pub config: ForestConfig,
    pub resolved: bool,
    pub winning: Vec<WinningNode>,
    pub nodes: Vec<NodeRecord>,
    pub total_cycles: u64,
    pub backend_totals: CallCounts,
    /// Volatile wall-clock field; everything else is deterministic
    /// under a scripted backend.
    pub generated_at_unix_ms: u64,
}

#[derive(Debug)]
pub struct CampaignOutcome {
    pub resolved: bool,
    pub report_path: PathBuf,
    pub total_cycles: u64,
    pub minimized_trace: Option<MinimizedTrace>,
}

/// Collects a baseline execution trace by instrumenting the candidate
/// files, rebuilding through the cache, and running the reproducer
/// once. Returns the parsed whole trace.
fn collect_baseline_trace(
    bundle: &BugBundle,
    cache: &crate::harness::CacheHandle,
    out: &Path,
) -> Result<Trace, CampaignError> {
    let log_path = out.join("trace.log");
    let _ = fs::remove_file(&log_path);
    let instrumented_dir = out.join("instrumented");
    let ws = instrument_c_sources(
        &bundle.workspace,
        &bundle.localization_candidates,
        &log_path,
        &instrumented_dir,
    )
    .map_err(|e| CampaignError::Task(format!("instrumentation failed: {e}")))?;

    let artifact = cache
        .build(&ws.root, &out.join("instrumented_build"))
        .map_err(|e| CampaignError::Task(format!("instrumented build failed: {e}")))?;
    let outcome = reproduce(&artifact, bundle, &log_path)
        .map_err(|e| CampaignError::Task(format!("baseline reproduce failed: {e}")))?;
    if matches!(outcome, ReproduceOutcome::Resolved) {
        log::warn!("baseline reproducer did not crash; the bundle may not reproduce its bug");
    }

    let text = fs::read_to_string(&log_path).unwrap_or_default();
    let mut trace = parse_trace(&text)
        .map_err(|e| CampaignError::Task(format!("trace log unparseable: {e}")))?;
    trace.source_note = format!("baseline reproduce of {}", bundle.bug_id);
    Ok(trace)
}

/// Minimizes against each localization candidate in order; the first
/// one that anchors wins.
fn minimize_for_bundle(
    trace: &Trace,
    bundle: &BugBundle,
    cfg: &MinimizerConfig,
) -> Option<MinimizedTrace> {
    let pid = trace.records.last().map(|r| r.pid)?;
    for candidate in &bundle.localization_candidates {
        match minimize(trace, &bundle.report, candidate, pid, cfg) {
            Ok(m) => return Some(m),
            Err(e) => log::debug!("minimize against {candidate}: {e}"),
        }
    }
    log::warn!("no localization candidate anchored the trace; running without execution context");
    None
}

/// Runs a full campaign and writes `forest_report.json` plus, when a
/// trace was collected, `minimized_trace.txt` under the output dir.
pub fn run_campaign(cfg: &RunConfig) -> Result<CampaignOutcome, CampaignError> {
    cfg.forest
        .validate()
        .map_err(CampaignError::Config)?;
    cfg.backend
        .validate()
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    let bundle = BugBundle::load(&cfg.bundle)?;
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CampaignError::Config(format!("cannot create output dir: {e}")))?;

    // Fixture paths were made absolute at load time; "." covers
    // configs built in code with cwd-relative fixtures.
    let backend = cfg
        .backend
        .build(Path::new("."))
        .map_err(|e| CampaignError::Config(e.to_string()))?;

    let cache = warm_cache(&bundle, &cfg.out.join("cache"))?;

    let minimized = if cfg.use_execution_trace {
        match collect_baseline_trace(&bundle, &cache, &cfg.out) {
            Ok(trace) => minimize_for_bundle(&trace, &bundle, &cfg.minimizer),
            Err(e) => {
                log::warn!("trace collection failed, continuing without execution context: {e}");
                None
            }
        }
    } else {
        None
    };

    if let Some(m) = &minimized {
        let mut text = format!(
            "# minimized trace: bug {} candidate {} pid {} anchor {}..{}\n",
            bundle.bug_id, m.candidate_file, m.pid, m.anchor_span.0, m.anchor_span.1
        );
        text.push_str(&serialize_trace(&Trace {
            records: m.records.clone(),
            source_note: String::new(),
        }));
        let path = cfg.out.join("minimized_trace.txt");
        fs::write(&path, text)
            .map_err(|e| CampaignError::Task(format!("cannot write minimized trace: {e}")))?;
    }

    let root_workspace = cache.src_dir().to_path_buf();
    let harness = BundleHarness::new(
        cache,
        bundle.clone(),
        cfg.out.join("node_trace.log"),
        cfg.out.join("builds"),
    );
    let scratch_root = cfg.out.join("scratch");
    fs::create_dir_all(&scratch_root)
        .map_err(|e| CampaignError::Task(format!("cannot create scratch dir: {e}")))?;

    let deps = SearchDeps {
        backend: backend.as_ref(),
        backend_cfg: &cfg.backend,
        harness: &harness,
        bug_id: &bundle.bug_id,
        candidate_files: &bundle.localization_candidates,
        minimized_trace: minimized.as_ref(),
        scratch_root: &scratch_root,
    };
    let forest = run_forest(&root_workspace, &bundle.report, &deps, &cfg.forest);

    let report = ForestReport {
        bug_id: bundle.bug_id.clone(),
        template_version: TEMPLATE_VERSION.to_string(),
        backend: backend.name().to_string(),
        use_execution_trace: cfg.use_execution_trace,
        trace_records: minimized.as_ref().map(|m| m.records.len()),
        config: cfg.forest.clone(),
        resolved: forest.resolved,
        winning: forest.winning,
        nodes: forest.nodes,
        total_cycles: forest.total_cycles,
        backend_totals: forest.backend_totals,
        generated_at_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
    };
    let report_path = cfg.out.join(REPORT_FILE_NAME);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CampaignError::Task(format!("cannot serialize report: {e}")))?;
    fs::write(&report_path, json)
        .map_err(|e| CampaignError::Task(format!("cannot write report: {e}")))?;

    Ok(CampaignOutcome {
        resolved: report.resolved,
        report_path,
        total_cycles: report.total_cycles,
        minimized_trace: minimized,
    })
}
