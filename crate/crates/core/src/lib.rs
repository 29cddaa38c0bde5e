//! Crash-repair toolkit: execution-trace minimization, replace-based
//! patching, hypothesis/patch debug cycles searched as trees and
//! forests, and an incremental build-and-reproduce harness for small
//! instrumented C programs driven by a pluggable text-generation
//! backend.

pub mod agent;
pub mod backend;
pub mod bundle;
pub mod cis;
pub mod diff;
pub mod fsutil;
pub mod harness;
pub mod instrument;
pub mod minimize;
pub mod parse;
pub mod patch;
pub mod prompt;
pub mod report;
pub mod run;
pub mod search;
pub mod trace;

pub use backend::{BackendConfig, CallKey, Stage, TextBackend};
pub use bundle::BugBundle;
pub use minimize::{minimize, MinimizedTrace, MinimizerConfig};
pub use patch::{apply_patch, Edit, Patch};
pub use report::CrashReport;
pub use search::{run_forest, ForestConfig};
pub use trace::{filter_by_pid, parse_trace, serialize_trace, Trace, TraceRecord};
