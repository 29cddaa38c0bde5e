//! Debug cycles organized into trees and forests.
//!
//! One cycle runs hypothesis generation, self-reflection, patch
//! generation, the fast compile filter, self-consistency selection,
//! then a full build and reproducer run. A tree expands failed cycles
//! into children that inherit the patched workspace and fresh crash
//! report; exploration along a branch stops on success. A forest is a
//! set of independent trees from the same root state; it succeeds when
//! any tree resolves the crash, and every tree runs to its own
//! completion so cycle accounting stays comparable across runs.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, AgentOps, CallCursor, Hypothesis};
use crate::backend::{BackendConfig, CallCounts, CallMeter, TextBackend};
use crate::fsutil::copy_dir;
use crate::harness::{RepairHarness, ReproduceOutcome, ValidationOutcome};
use crate::minimize::MinimizedTrace;
use crate::patch::{apply_patch, Patch};
use crate::prompt::RepairContext;
use crate::report::CrashReport;

/// Search shape: F trees of depth D and branching B.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Number of independent trees (F).
    #[serde(default = "default_num_trees")]
    pub num_trees: u32,
    /// Maximum node depth per tree (D); the root is depth 1.
    #[serde(default = "default_max_depth")]
    pub max_depth: u32,
    /// Children spawned per failed cycle (B).
    #[serde(default = "default_branching")]
    pub branching: u32,
    /// Hypothesis-generation restarts per cycle when no patch survives
    /// the compile filter (R).
    #[serde(default = "default_hypothesis_retries")]
    pub hypothesis_retries: u32,
    /// Hypotheses generated per cycle.
    #[serde(default = "default_n_hyp")]
    pub n_hyp: usize,
    /// Patch candidates generated per cycle.
    #[serde(default = "default_n_patch")]
    pub n_patch: usize,
    /// Recorded in reports; reserved for future sampling decisions.
    #[serde(default)]
    pub seed: u64,
    /// Run trees concurrently.
    #[serde(default)]
    pub parallel_trees: bool,
    /// Run sibling nodes of one parent concurrently.
    #[serde(default)]
    pub parallel_siblings: bool,
    /// Children inherit the parent's patched workspace (the tree-path
    /// cumulative mode); when false they restart from the root
    /// workspace with only the report updated.
    #[serde(default = "default_true")]
    pub inherit_workspace: bool,
}

fn default_num_trees() -> u32 {
    4
}
fn default_max_depth() -> u32 {
    4
}
fn default_branching() -> u32 {
    1
}
fn default_hypothesis_retries() -> u32 {
    2
}
fn default_n_hyp() -> usize {
    3
}
fn default_n_patch() -> usize {
    5
}
fn default_true() -> bool {
    true
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: default_num_trees(),
            max_depth: default_max_depth(),
            branching: default_branching(),
            hypothesis_retries: default_hypothesis_retries(),
            n_hyp: default_n_hyp(),
            n_patch: default_n_patch(),
            seed: 0,
            parallel_trees: false,
            parallel_siblings: false,
            inherit_workspace: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.num_trees < 1 || self.max_depth < 1 || self.branching < 1 {
            return Err("num_trees, max_depth and branching must all be >= 1".into());
        }
        if self.n_hyp < 1 || self.n_patch < 1 {
            return Err("n_hyp and n_patch must be >= 1".into());
        }
        Ok(())
    }

    /// Upper bound on executed cycles per tree: sum of B^i for i < D.
    pub fn tree_cycle_bound(&self) -> u64 {
        let mut total = 0u64;
        let mut level = 1u64;
        for _ in 0..self.max_depth {
            total = total.saturating_add(level);
            level = level.saturating_mul(self.branching as u64);
        }
        total
    }
}

/// One debug cycle's starting state: the codebase version and the crash
/// report it must explain.
#[derive(Debug, Clone)]
pub struct CycleState {
    pub workspace: PathBuf,
    pub report: CrashReport,
    pub depth: u32,
    pub tree_id: u32,
    pub node_id: u32,
    pub parent_node_id: Option<u32>,
}

/// What one debug cycle concluded.
#[derive(Debug, Clone)]
pub enum CycleOutcome {
    /// The reproducer ran without crashing.
    Resolved { patch: Patch, diff: String },
    /// The patch applied and built but the reproducer still crashed;
    /// `workspace` is the patched state children inherit.
    CrashPersists {
        report: CrashReport,
        patch: Patch,
        diff: String,
        workspace: PathBuf,
    },
    /// No patch survived compile filtering after all restarts, or the
    /// full build failed after a passing per-file check.
    NoCompilablePatch { detail: String },
    /// Infrastructure failure; does not consume a child slot.
    HarnessError { detail: String },
}

/// Serializable projection of a cycle outcome for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeOutcome {
    Resolved,
    CrashPersists { bug_type: String },
    NoCompilablePatch { detail: String },
    HarnessError { detail: String },
}

/// Wall-clock data, isolated so reports can be compared modulo timing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTiming {
    pub started_unix_ms: u64,
    pub duration_ms: u64,
}

/// One executed cycle in a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub tree_id: u32,
    pub node_id: u32,
    pub parent_node_id: Option<u32>,
    pub depth: u32,
    pub outcome: NodeOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
    pub backend_calls: CallCounts,
    pub timing: NodeTiming,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeResult {
    pub tree_id: u32,
    pub nodes: Vec<NodeRecord>,
    pub resolved_node: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinningNode {
    pub tree_id: u32,
    pub node_id: u32,
    pub depth: u32,
    pub diff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestResult {
    pub resolved: bool,
    pub winning: Vec<WinningNode>,
    pub nodes: Vec<NodeRecord>,
    pub total_cycles: u64,
    pub backend_totals: CallCounts,
}

/// Shared dependencies for a search run.
pub struct SearchDeps<'a> {
    pub backend: &'a dyn TextBackend,
    pub backend_cfg: &'a BackendConfig,
    pub harness: &'a dyn RepairHarness,
    pub bug_id: &'a str,
    pub candidate_files: &'a [String],
    pub minimized_trace: Option<&'a MinimizedTrace>,
    /// Node workspaces and build outputs go under here.
    pub scratch_root: &'a Path,
}

fn read_candidates(
    workspace: &Path,
    candidates: &[String],
) -> Result<Vec<(String, String)>, String> {
    let mut files = Vec::new();
    for rel in candidates {
        let path = workspace.join(rel);
        let contents = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read candidate {}: {e}", path.display()))?;
        files.push((rel.clone(), contents));
    }
    Ok(files)
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Runs one debug cycle. A harness-level failure is retried once with a
/// fresh call cursor before the node is marked failed.
pub fn run_cycle(
    state: &CycleState,
    deps: &SearchDeps<'_>,
    cfg: &ForestConfig,
    meter: &CallMeter,
) -> CycleOutcome {
    let first = run_cycle_inner(state, deps, cfg, meter);
    if matches!(first, CycleOutcome::HarnessError { .. }) {
        log::warn!(
            "tree {} node {}: harness error, retrying once",
            state.tree_id,
            state.node_id
        );
        return run_cycle_inner(state, deps, cfg, meter);
    }
    first
}

fn run_cycle_inner(
    state: &CycleState,
    deps: &SearchDeps<'_>,
    cfg: &ForestConfig,
    meter: &CallMeter,
) -> CycleOutcome {
    let candidate_files = match read_candidates(&state.workspace, deps.candidate_files) {
        Ok(files) => files,
        Err(detail) => return CycleOutcome::HarnessError { detail },
    };
    let ctx = RepairContext {
        bug_id: deps.bug_id.to_string(),
        report: state.report.clone(),
        candidate_files,
        minimized_trace: deps.minimized_trace.cloned(),
    };
    let agent = AgentOps {
        backend: deps.backend,
        cfg: deps.backend_cfg,
        meter,
    };
    let mut cursor = CallCursor::new(deps.bug_id, state.tree_id, state.depth);

    let mut chosen: Option<(Hypothesis, Patch)> = None;
    let mut last_detail = String::from("no compilable patch");
    for attempt in 0..=cfg.hypothesis_retries {
        let hypotheses = match agent.generate_hypotheses(&mut cursor, &ctx, cfg.n_hyp) {
            Ok(h) => h,
            Err(AgentError::BackendUnavailable { last, .. }) => {
                return CycleOutcome::HarnessError {
                    detail: format!("backend unavailable: {last}"),
                }
            }
            Err(e) => {
                return CycleOutcome::HarnessError {
                    detail: e.to_string(),
                }
            }
        };
        if hypotheses.is_empty() {
            last_detail = format!("attempt {attempt}: no parseable hypothesis");
            continue;
        }
        let hyp_index = match agent.select_hypothesis(&mut cursor, &ctx, &hypotheses) {
            Ok(i) => i,
            Err(e) => {
                return CycleOutcome::HarnessError {
                    detail: e.to_string(),
                }
            }
        };
        let hypothesis = hypotheses[hyp_index].clone();

        let patches = match agent.generate_patches(&mut cursor, &ctx, &hypothesis, cfg.n_patch) {
            Ok(p) => p,
            Err(AgentError::BackendUnavailable { last, .. }) => {
                return CycleOutcome::HarnessError {
                    detail: format!("backend unavailable: {last}"),
                }
            }
            Err(e) => {
                return CycleOutcome::HarnessError {
                    detail: e.to_string(),
                }
            }
        };

        let mut survivors = Vec::new();
        for patch in patches {
            if patch.edits.is_empty() {
                continue;
            }
            match deps.harness.check_compile(&state.workspace, &patch) {
                Ok(check) if check.passed => survivors.push(patch),
                Ok(check) => {
                    let failed: Vec<&str> = check
                        .per_file
                        .iter()
                        .filter(|f| !f.passed)
                        .map(|f| f.file.as_str())
                        .collect();
                    log::debug!("patch filtered out, failing files: {failed:?}");
                }
                Err(e) => {
                    return CycleOutcome::HarnessError {
                        detail: format!("compile check: {e}"),
                    }
                }
            }
        }

        if survivors.is_empty() {
            // The selected hypothesis is deemed invalid; restart from
            // hypothesis generation.
            last_detail = format!("attempt {attempt}: no patch survived the compile filter");
            continue;
        }
        let patch_index = if survivors.len() == 1 {
            0
        } else {
            match agent.select_patch(&mut cursor, &ctx, &hypothesis, &survivors) {
                Ok(i) => i,
                Err(e) => {
                    return CycleOutcome::HarnessError {
                        detail: e.to_string(),
                    }
                }
            }
        };
        chosen = Some((hypothesis, survivors.swap_remove(patch_index)));
        break;
    }

    let Some((_hypothesis, patch)) = chosen else {
        return CycleOutcome::NoCompilablePatch {
            detail: last_detail,
        };
    };

    // Materialize C_i: copy the parent state and apply the patch.
    let node_dir = deps
        .scratch_root
        .join(format!("tree_{}", state.tree_id))
        .join(format!("node_{}", state.node_id));
    if let Err(e) = std::fs::create_dir_all(&node_dir) {
        return CycleOutcome::HarnessError {
            detail: format!("cannot create node workspace: {e}"),
        };
    }
    if let Err(e) = copy_dir(&state.workspace, &node_dir) {
        return CycleOutcome::HarnessError {
            detail: format!("cannot copy workspace: {e}"),
        };
    }
    let diff = match apply_patch(&node_dir, &patch) {
        Ok(d) => d,
        Err(e) => {
            // The compile check applied this patch to a scratch copy of
            // the same state, so failure here means the patch is bad in
            // a way the filter could not see.
            return CycleOutcome::NoCompilablePatch {
                detail: format!("patch passed the compile check but failed to apply: {e}"),
            };
        }
    };

    match deps.harness.validate(&node_dir, &patch, &state.report) {
        Err(e) => CycleOutcome::HarnessError {
            detail: e.to_string(),
        },
        Ok(ValidationOutcome::BuildFailed { log }) => CycleOutcome::NoCompilablePatch {
            detail: format!("full build failed after a passing compile check:\n{log}"),
        },
        Ok(ValidationOutcome::Ran { outcome, .. }) => match outcome {
            ReproduceOutcome::Resolved => CycleOutcome::Resolved { patch, diff },
            ReproduceOutcome::Crashed { report, .. } => CycleOutcome::CrashPersists {
                report,
                patch,
                diff,
                workspace: node_dir,
            },
        },
    }
}

struct Pending {
    workspace: PathBuf,
    report: CrashReport,
    depth: u32,
    parent_node_id: Option<u32>,
}

/// Runs one debug tree to completion: breadth-first expansion, halting
/// as soon as a node resolves the crash.
pub fn run_tree(
    tree_id: u32,
    root_workspace: &Path,
    root_report: &CrashReport,
    deps: &SearchDeps<'_>,
    cfg: &ForestConfig,
) -> TreeResult {
    let mut nodes: Vec<NodeRecord> = Vec::new();
    let mut resolved_node = None;
    let mut next_node_id = 1u32;
    let mut queue: VecDeque<Pending> = VecDeque::new();
    queue.push_back(Pending {
        workspace: root_workspace.to_path_buf(),
        report: root_report.clone(),
        depth: 1,
        parent_node_id: None,
    });

    'search: while !queue.is_empty() {
        // Take one node in sequential mode, a sibling batch otherwise.
        let batch_len = if cfg.parallel_siblings {
            queue.len()
        } else {
            1
        };
        let mut batch = Vec::with_capacity(batch_len);
        for _ in 0..batch_len {
            let pending = queue.pop_front().expect("batch_len <= queue.len()");
            let state = CycleState {
                workspace: pending.workspace,
                report: pending.report,
                depth: pending.depth,
                tree_id,
                node_id: next_node_id,
                parent_node_id: pending.parent_node_id,
            };
            next_node_id += 1;
            batch.push(state);
        }

        let outcomes: Vec<(CycleState, CycleOutcome, CallCounts, NodeTiming)> =
            if cfg.parallel_siblings && batch.len() > 1 {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = batch
                        .into_iter()
                        .map(|state| {
                            scope.spawn(move || execute_node(state, deps, cfg))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("cycle thread panicked"))
                        .collect()
                })
            } else {
                batch
                    .into_iter()
                    .map(|state| execute_node(state, deps, cfg))
                    .collect()
            };

        for (state, outcome, calls, timing) in outcomes {
            let (node_outcome, diff) = match &outcome {
                CycleOutcome::Resolved { diff, .. } => {
                    (NodeOutcome::Resolved, Some(diff.clone()))
                }
                CycleOutcome::CrashPersists { report, diff, .. } => (
                    NodeOutcome::CrashPersists {
                        bug_type: report.bug_type.clone(),
                    },
                    Some(diff.clone()),
                ),
                CycleOutcome::NoCompilablePatch { detail } => (
                    NodeOutcome::NoCompilablePatch {
                        detail: detail.clone(),
                    },
                    None,
                ),
                CycleOutcome::HarnessError { detail } => (
                    NodeOutcome::HarnessError {
                        detail: detail.clone(),
                    },
                    None,
                ),
            };
            nodes.push(NodeRecord {
                tree_id,
                node_id: state.node_id,
                parent_node_id: state.parent_node_id,
                depth: state.depth,
                outcome: node_outcome,
                diff,
                backend_calls: calls,
                timing,
            });

            match outcome {
                CycleOutcome::Resolved { .. } => {
                    resolved_node = Some(state.node_id);
                }
                CycleOutcome::CrashPersists {
                    report, workspace, ..
                } => {
                    if state.depth < cfg.max_depth && resolved_node.is_none() {
                        for _ in 0..cfg.branching {
                            queue.push_back(Pending {
                                workspace: if cfg.inherit_workspace {
                                    workspace.clone()
                                } else {
                                    root_workspace.to_path_buf()
                                },
                                report: report.clone(),
                                depth: state.depth + 1,
                                parent_node_id: Some(state.node_id),
                            });
                        }
                    }
                }
                CycleOutcome::NoCompilablePatch { .. } | CycleOutcome::HarnessError { .. } => {}
            }
        }

        if resolved_node.is_some() {
            break 'search;
        }
    }

    TreeResult {
        tree_id,
        nodes,
        resolved_node,
    }
}

fn execute_node(
    state: CycleState,
    deps: &SearchDeps<'_>,
    cfg: &ForestConfig,
) -> (CycleState, CycleOutcome, CallCounts, NodeTiming) {
    let meter = CallMeter::default();
    let started_unix_ms = unix_ms();
    let started = Instant::now();
    let outcome = run_cycle(&state, deps, cfg, &meter);
    let timing = NodeTiming {
        started_unix_ms,
        duration_ms: started.elapsed().as_millis() as u64,
    };
    (state, outcome, meter.snapshot(), timing)
}

/// Runs the whole forest: independent trees from the identical root
/// state with distinct tree ids. The forest succeeds when any tree
/// resolves; every tree still runs to its own completion.
pub fn run_forest(
    root_workspace: &Path,
    root_report: &CrashReport,
    deps: &SearchDeps<'_>,
    cfg: &ForestConfig,
) -> ForestResult {
    let tree_ids: Vec<u32> = (1..=cfg.num_trees).collect();
    let trees: Vec<TreeResult> = if cfg.parallel_trees && cfg.num_trees > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = tree_ids
                .iter()
                .map(|&tree_id| {
                    scope.spawn(move || run_tree(tree_id, root_workspace, root_report, deps, cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("tree thread panicked"))
                .collect()
        })
    } else {
        tree_ids
            .iter()
            .map(|&tree_id| run_tree(tree_id, root_workspace, root_report, deps, cfg))
            .collect()
    };

    let mut nodes = Vec::new();
    let mut winning = Vec::new();
    for tree in &trees {
        if let Some(node_id) = tree.resolved_node {
            if let Some(record) = tree.nodes.iter().find(|n| n.node_id == node_id) {
                winning.push(WinningNode {
                    tree_id: tree.tree_id,
                    node_id,
                    depth: record.depth,
                    diff: record.diff.clone().unwrap_or_default(),
                });
            }
        }
        nodes.extend(tree.nodes.iter().cloned());
    }
    nodes.sort_by_key(|n| (n.tree_id, n.node_id));

    let mut backend_totals = CallCounts::default();
    for node in &nodes {
        backend_totals.add(node.backend_calls);
    }

    ForestResult {
        resolved: !winning.is_empty(),
        total_cycles: nodes.len() as u64,
        backend_totals,
        winning,
        nodes,
    }
}
