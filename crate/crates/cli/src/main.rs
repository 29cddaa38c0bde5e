//! `crashrepair` command line: repair campaigns, trace minimization,
//! CIS scoring, patch application, and compile checks over bug bundles.
//!
//! Exit codes: 0 success, 1 task-level failure (e.g. crash not
//! resolved), 2 usage or config error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crashrepair_core::backend::BackendKind;
use crashrepair_core::bundle::BugBundle;
use crashrepair_core::cis::{run_cis, CisManifest, CisStage};
use crashrepair_core::diff::hunk_count;
use crashrepair_core::harness::warm_cache;
use crashrepair_core::minimize::{minimize, MinimizerConfig};
use crashrepair_core::parse::parse_modifications;
use crashrepair_core::patch::apply_patch;
use crashrepair_core::report::CrashReport;
use crashrepair_core::run::{run_campaign, CampaignError, RunConfig};
use crashrepair_core::trace::{parse_trace, serialize_trace, Trace};

const EXIT_TASK: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "crashrepair", version, about = "Crash-repair campaigns over bug bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full repair campaign from a JSON config file.
    Run(RunArgs),
    /// Minimize a crashing thread's trace around its stack anchor.
    Minimize(MinimizeArgs),
    /// Score a corpus manifest with the Complete Intersection Score.
    Cis(CisArgs),
    /// Apply a patch file to a workspace and print the unified diff.
    Apply(ApplyArgs),
    /// Compile-check a patch file against a bundle, per file.
    CheckCompile(CheckCompileArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Campaign config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the bundle manifest path.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Override the number of trees (F).
    #[arg(long)]
    trees: Option<u32>,
    /// Override the maximum depth (D).
    #[arg(long)]
    depth: Option<u32>,
    /// Override the branching factor (B).
    #[arg(long)]
    branching: Option<u32>,
    /// Disable execution-trace collection and `<execution>` prompts.
    #[arg(long)]
    no_exec_trace: bool,
    /// Override the backend kind.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Scripted,
}

#[derive(Args)]
struct MinimizeArgs {
    /// Trace file (`<pid> <file> <func>` lines).
    #[arg(long)]
    trace: PathBuf,
    /// Crash report JSON ({bug_type, frames, raw_text}).
    #[arg(long)]
    report: PathBuf,
    /// Localization candidate file the anchor must come from.
    #[arg(long)]
    candidate_file: String,
    /// Crashing pid to isolate.
    #[arg(long)]
    pid: i64,
    #[arg(long, default_value_t = 200)]
    max_records: usize,
    #[arg(long, default_value_t = 8)]
    max_period: usize,
    #[arg(long, default_value_t = 2)]
    min_repeats: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CisArgs {
    /// Corpus manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// Record set to score over.
    #[arg(long, value_enum, default_value_t = StageArg::Minimized)]
    stage: StageArg,
    #[arg(long, default_value_t = 200)]
    max_records: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    StackMatched,
    Anchored,
    AnchoredBackward,
    AnchoredForward,
    FullPid,
    Minimized,
}

impl From<StageArg> for CisStage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::StackMatched => CisStage::StackMatched,
            StageArg::Anchored => CisStage::Anchored,
            StageArg::AnchoredBackward => CisStage::AnchoredBackward,
            StageArg::AnchoredForward => CisStage::AnchoredForward,
            StageArg::FullPid => CisStage::FullPid,
            StageArg::Minimized => CisStage::Minimized,
        }
    }
}

#[derive(Args)]
struct ApplyArgs {
    /// Workspace directory the patch applies to.
    #[arg(long)]
    workspace: PathBuf,
    /// Patch file in the modification grammar.
    #[arg(long)]
    patch: PathBuf,
}

#[derive(Args)]
struct CheckCompileArgs {
    /// Bundle manifest JSON.
    #[arg(long)]
    bundle: PathBuf,
    /// Patch file in the modification grammar.
    #[arg(long)]
    patch: PathBuf,
    /// Cache directory (a temp dir when omitted).
    #[arg(long)]
    cache: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Minimize(args) => cmd_minimize(args),
        Command::Cis(args) => cmd_cis(args),
        Command::Apply(args) => cmd_apply(args),
        Command::CheckCompile(args) => cmd_check_compile(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_TASK)
        }
    }
}

fn usage_error(msg: String) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(CampaignError::Config(msg)) | Err(CampaignError::Task(msg)) => {
            return Ok(usage_error(msg))
        }
    };
    if let Some(bundle) = args.bundle {
        cfg.bundle = bundle;
    }
    if let Some(trees) = args.trees {
        cfg.forest.num_trees = trees;
    }
    if let Some(depth) = args.depth {
        cfg.forest.max_depth = depth;
    }
    if let Some(branching) = args.branching {
        cfg.forest.branching = branching;
    }
    if args.no_exec_trace {
        cfg.use_execution_trace = false;
    }
    if let Some(backend) = args.backend {
        cfg.backend.kind = match backend {
            BackendArg::Http => BackendKind::Http,
            BackendArg::Scripted => BackendKind::Scripted,
        };
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }

    match run_campaign(&cfg) {
        Ok(outcome) => {
            println!(
                "{}: {} after {} cycles, report at {}",
                cfg.bundle.display(),
                if outcome.resolved { "resolved" } else { "not resolved" },
                outcome.total_cycles,
                outcome.report_path.display()
            );
            Ok(if outcome.resolved {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_TASK)
            })
        }
        Err(CampaignError::Config(msg)) => Ok(usage_error(msg)),
        Err(CampaignError::Task(msg)) => {
            eprintln!("error: {msg}");
            Ok(ExitCode::from(EXIT_TASK))
        }
    }
}

fn cmd_minimize(args: MinimizeArgs) -> anyhow::Result<ExitCode> {
    let trace_text = match fs::read_to_string(&args.trace) {
        Ok(t) => t,
        Err(e) => return Ok(usage_error(format!("cannot read {}: {e}", args.trace.display()))),
    };
    let trace = match parse_trace(&trace_text) {
        Ok(t) => t,
        Err(e) => return Ok(usage_error(e.to_string())),
    };
    let report: CrashReport = match fs::read_to_string(&args.report)
        .map_err(|e| format!("cannot read {}: {e}", args.report.display()))
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(r) => r,
        Err(msg) => return Ok(usage_error(msg)),
    };
    let cfg = MinimizerConfig {
        max_records: args.max_records,
        max_period: args.max_period,
        min_repeats: args.min_repeats,
    };
    match minimize(&trace, &report, &args.candidate_file, args.pid, &cfg) {
        Ok(m) => {
            let mut out = format!(
                "# minimized trace: candidate {} pid {} anchor {}..{}\n",
                m.candidate_file, m.pid, m.anchor_span.0, m.anchor_span.1
            );
            out.push_str(&serialize_trace(&Trace {
                records: m.records.clone(),
                source_note: String::new(),
            }));
            match args.out {
                Some(path) => fs::write(&path, out)?,
                None => print!("{out}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(EXIT_TASK))
        }
    }
}

fn cmd_cis(args: CisArgs) -> anyhow::Result<ExitCode> {
    let (manifest, base) = match CisManifest::load(&args.manifest) {
        Ok(m) => m,
        Err(e) => return Ok(usage_error(e.to_string())),
    };
    let cfg = MinimizerConfig {
        max_records: args.max_records,
        ..Default::default()
    };
    match run_cis(&manifest, &base, &cfg, args.stage.into()) {
        Ok(report) => {
            let json = serde_json::to_string_pretty(&report)?;
            match args.out {
                Some(path) => fs::write(&path, &json)?,
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(EXIT_TASK))
        }
    }
}

fn cmd_apply(args: ApplyArgs) -> anyhow::Result<ExitCode> {
    if !args.workspace.is_dir() {
        return Ok(usage_error(format!(
            "workspace is not a directory: {}",
            args.workspace.display()
        )));
    }
    let text = match fs::read_to_string(&args.patch) {
        Ok(t) => t,
        Err(e) => return Ok(usage_error(format!("cannot read {}: {e}", args.patch.display()))),
    };
    let patch = match parse_modifications(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_TASK));
        }
    };
    match apply_patch(&args.workspace, &patch) {
        Ok(diff) => {
            print!("{diff}");
            log::info!("applied {} edits, {} hunks", patch.edits.len(), hunk_count(&diff));
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(EXIT_TASK))
        }
    }
}

fn cmd_check_compile(args: CheckCompileArgs) -> anyhow::Result<ExitCode> {
    let bundle = match BugBundle::load(&args.bundle) {
        Ok(b) => b,
        Err(e) => return Ok(usage_error(e.to_string())),
    };
    let text = match fs::read_to_string(&args.patch) {
        Ok(t) => t,
        Err(e) => return Ok(usage_error(format!("cannot read {}: {e}", args.patch.display()))),
    };
    let patch = match parse_modifications(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_TASK));
        }
    };

    let temp;
    let cache_dir: &Path = match &args.cache {
        Some(dir) => dir,
        None => {
            temp = tempfile::tempdir()?;
            temp.path()
        }
    };
    let cache = match warm_cache(&bundle, cache_dir) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_TASK));
        }
    };
    let check = match cache.check_compile(cache.src_dir(), &patch) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_TASK));
        }
    };
    for file in &check.per_file {
        println!("{}: {}", file.file, if file.passed { "pass" } else { "fail" });
        if !file.passed {
            for line in file.log.lines() {
                println!("    {line}");
            }
        }
    }
    Ok(if check.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_TASK)
    })
}
