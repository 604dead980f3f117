//! Command-line front end.
//!
//! | exit | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 2    | usage error: bad flags or a required path is missing |
//! | 3    | discovery failed                                     |
//! | 4    | probe refused or failed                              |
//! | 5    | plan rejected                                        |
//! | 6    | execution failed                                     |
//! | 7    | replay hit a response that drifted from its lock     |
//! | 8    | unreadable input: catalog, fixture, skill or transcript |
//!
//! Paths given without an extension also resolve to `<path>.json`, so
//! `--fixture fixtures/seed0` finds `fixtures/seed0.json`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::mockenv::MockEnv;
use crate::pipeline::{
    MemoryChoice, PipelineConfig, PipelineError, PipelineFailure, RUNNING_EXAMPLE_GOAL,
    ReplayOptions, ScriptedPlanner, Transcript, emit_skill, load_skill, replay_skill, run_pipeline,
};
use crate::probe::{ProbeReport, ProbeVerdict, probe_call};
use crate::registry::{LoadedContext, Registry, SearchRequest, SearchResponse};

/// Failure classes, each with one stable exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Usage,
    Discovery,
    Probe,
    Plan,
    Execution,
    LockMismatch,
    Input,
}

impl Failure {
    pub const ALL: [Failure; 7] = [
        Failure::Usage,
        Failure::Discovery,
        Failure::Probe,
        Failure::Plan,
        Failure::Execution,
        Failure::LockMismatch,
        Failure::Input,
    ];

    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Usage => 2,
            Failure::Discovery => 3,
            Failure::Probe => 4,
            Failure::Plan => 5,
            Failure::Execution => 6,
            Failure::LockMismatch => 7,
            Failure::Input => 8,
        }
    }

    pub fn of(error: &PipelineError) -> Self {
        match error {
            PipelineError::DiscoveryFailed(_) => Failure::Discovery,
            PipelineError::ProbeRefused(_) => Failure::Probe,
            PipelineError::PlanRejected(_) => Failure::Plan,
            PipelineError::ExecutionFailed(_) => Failure::Execution,
            PipelineError::LockMismatch { .. } => Failure::LockMismatch,
            PipelineError::InvalidSkill(_) => Failure::Input,
        }
    }
}

#[derive(Debug)]
struct CliError {
    failure: Failure,
    message: String,
}

impl CliError {
    fn new(failure: Failure, message: impl Into<String>) -> Self {
        Self {
            failure,
            message: message.into(),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "skillforge",
    version,
    about = "Synthesize, run and replay archival workflows against a simulated mailbox and drive"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct EnvArgs {
    /// World fixture document; without it the built-in fixture for `--seed` is used.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discover, plan, probe and execute the archival goal, then freeze a skill.
    Run {
        #[arg(long)]
        catalog: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 8)]
        max_in_flight: usize,
        /// Checkpoint file used when memory is accepted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Accept the checkpoint proposal.
        #[arg(long, overrides_with = "no_memory")]
        memory: bool,
        /// Decline it and rely on idempotent uploads alone (the default).
        #[arg(long)]
        no_memory: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        structured: bool,
    },
    /// Execute a frozen skill without discovery or probing.
    Replay {
        skill: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        max_in_flight: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory for the replay transcript and final world.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        structured: bool,
    },
    /// Rank catalog tools against a query.
    Search {
        query: String,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        app: Option<String>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        structured: bool,
    },
    /// Call one tool with a tiny page and show what comes back.
    Probe {
        tool: String,
        #[arg(long)]
        catalog: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 1)]
        limit: u32,
        /// Tool arguments as a JSON object.
        #[arg(long, default_value = "{}")]
        args: String,
        #[arg(long)]
        structured: bool,
    },
    /// Summarize a transcript written by `run` or `replay`.
    Inspect {
        transcript: PathBuf,
        #[arg(long)]
        structured: bool,
    },
}

/// Outcome of `run`, as printed with `--structured`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stdout: Vec<String>,
    pub uploaded: usize,
    pub unchanged: usize,
    pub files: Vec<String>,
}

/// Event counts and printed lines of a transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub events: usize,
    pub counts: std::collections::BTreeMap<String, usize>,
    pub stdout: Vec<String>,
    pub halted: Option<String>,
}

impl TranscriptSummary {
    pub fn of(transcript: &Transcript) -> Self {
        let mut counts = std::collections::BTreeMap::new();
        let mut halted = None;
        for e in &transcript.events {
            *counts.entry(e.name().to_owned()).or_insert(0) += 1;
            if let crate::pipeline::Event::Halted { phase, reason } = e {
                halted = Some(format!("{phase}: {reason}"));
            }
        }
        Self {
            events: transcript.events.len(),
            counts,
            stdout: transcript
                .stdout_lines()
                .into_iter()
                .map(str::to_owned)
                .collect(),
            halted,
        }
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{e}");
                Failure::Usage.exit_code()
            } else {
                let _ = write!(out, "{e}");
                0
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error ({:?}): {}", e.failure, e.message);
            e.failure.exit_code()
        }
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .enable_time()
        .build()
        .expect("tokio runtime")
}

/// `path` itself, or `path.json` when only that exists.
fn resolve(path: &Path, what: &str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    if path.extension().is_none() {
        let with_ext = path.with_extension("json");
        if with_ext.is_file() {
            return Ok(with_ext);
        }
    }
    Err(CliError::new(
        Failure::Usage,
        format!("{what} {} does not exist", path.display()),
    ))
}

fn load_registry(path: &Path) -> Result<Registry, CliError> {
    let path = resolve(path, "catalog")?;
    Registry::from_catalog_file(&path).map_err(|e| CliError::new(Failure::Input, e.to_string()))
}

fn load_env(args: &EnvArgs) -> Result<MockEnv, CliError> {
    match &args.fixture {
        Some(p) => {
            let path = resolve(p, "fixture")?;
            MockEnv::from_fixture_file(&path)
                .map_err(|e| CliError::new(Failure::Input, e.to_string()))
        }
        None => Ok(MockEnv::from_seed(args.seed)),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text)
        .map_err(|e| CliError::new(Failure::Input, format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn write_world(env: &MockEnv, dir: &Path) -> CliResult {
    write_file(&dir.join("world.json"), &(to_json(&env.snapshot()) + "\n"))
}

fn pipeline_failure(failure: PipelineFailure) -> CliError {
    CliError::new(
        Failure::of(&failure.error),
        format!("{} phase: {}", failure.error.phase(), failure.error),
    )
}

fn execute(command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Run {
            catalog,
            env,
            max_in_flight,
            checkpoint,
            memory,
            no_memory: _,
            out: dir,
            structured,
        } => {
            if max_in_flight == 0 {
                return Err(CliError::new(
                    Failure::Usage,
                    "--max-in-flight must be at least 1",
                ));
            }
            let registry = load_registry(&catalog)?;
            let env = load_env(&env)?;
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::new(Failure::Input, format!("{}: {e}", dir.display())))?;
            let memory = if memory {
                MemoryChoice::Accept {
                    checkpoint: checkpoint.unwrap_or_else(|| dir.join("processed.tsv")),
                }
            } else {
                MemoryChoice::Decline
            };
            let config = PipelineConfig {
                run_clock: env.snapshot().now,
                memory,
                max_in_flight,
                ..PipelineConfig::default()
            };
            let mut planner = ScriptedPlanner::new();
            let result = runtime().block_on(run_pipeline(
                RUNNING_EXAMPLE_GOAL,
                &registry,
                &env,
                &mut planner,
                &config,
            ));
            write_world(&env, &dir)?;
            let files = env.snapshot().files().map(|(p, _)| p.to_owned()).collect();
            let (summary, outcome) = match result {
                Ok(run) => {
                    write_file(&dir.join("transcript.jsonl"), &run.transcript.to_jsonl())?;
                    emit_skill(&run.artifact, &dir.join("skill.json"))
                        .map_err(|e| CliError::new(Failure::Input, e.to_string()))?;
                    write_file(
                        &dir.join("locks.json"),
                        &(to_json(&run.artifact.locks) + "\n"),
                    )?;
                    let summary = RunSummary {
                        ok: true,
                        failure: None,
                        error: None,
                        stdout: lines(&run.transcript),
                        uploaded: run.uploaded,
                        unchanged: run.unchanged,
                        files,
                    };
                    (summary, Ok(()))
                }
                Err(failure) => {
                    write_file(
                        &dir.join("transcript.jsonl"),
                        &failure.transcript.to_jsonl(),
                    )?;
                    let summary = RunSummary {
                        ok: false,
                        failure: Some(Failure::of(&failure.error)),
                        error: Some(failure.error.to_string()),
                        stdout: lines(&failure.transcript),
                        uploaded: 0,
                        unchanged: 0,
                        files,
                    };
                    (summary, Err(pipeline_failure(failure)))
                }
            };
            if structured {
                emit(out, &to_json(&summary));
            } else {
                summary.stdout.iter().for_each(|l| emit(out, l));
                if summary.ok {
                    emit(
                        out,
                        &format!("Skill written to {}", dir.join("skill.json").display()),
                    );
                }
            }
            outcome
        }
        Command::Replay {
            skill,
            env,
            max_in_flight,
            checkpoint,
            out: dir,
            structured,
        } => {
            let path = resolve(&skill, "skill")?;
            let artifact =
                load_skill(&path).map_err(|e| CliError::new(Failure::Input, e.to_string()))?;
            let env = load_env(&env)?;
            let options = ReplayOptions {
                checkpoint,
                max_in_flight,
            };
            let result = runtime().block_on(replay_skill(&artifact, &env, &options));
            let transcript = match &result {
                Ok(t) => t,
                Err(f) => &f.transcript,
            };
            if let Some(dir) = &dir {
                std::fs::create_dir_all(dir).map_err(|e| {
                    CliError::new(Failure::Input, format!("{}: {e}", dir.display()))
                })?;
                write_file(&dir.join("transcript.jsonl"), &transcript.to_jsonl())?;
                write_world(&env, dir)?;
            }
            if structured {
                emit(out, &to_json(transcript));
            } else {
                lines(transcript).iter().for_each(|l| emit(out, l));
            }
            result.map(|_| ()).map_err(pipeline_failure)
        }
        Command::Search {
            query,
            catalog,
            app,
            k,
            structured,
        } => {
            let registry = load_registry(&catalog)?;
            let mut request = SearchRequest::new(query).top(k);
            if let Some(app) = app {
                request = request.in_app(app);
            }
            let responses: Vec<SearchResponse> = registry
                .search_functions(&[request])
                .map_err(|e| CliError::new(Failure::Discovery, e.to_string()))?;
            if structured {
                emit(out, &to_json(&responses));
            } else {
                for (rank, r) in responses[0].results.iter().enumerate() {
                    emit(
                        out,
                        &format!(
                            "{:>2}  {:.3}  {:<36}  {}",
                            rank + 1,
                            r.score,
                            r.name,
                            r.snippet
                        ),
                    );
                }
            }
            Ok(())
        }
        Command::Probe {
            tool,
            catalog,
            env,
            limit,
            args,
            structured,
        } => {
            let registry = load_registry(&catalog)?;
            let env = load_env(&env)?;
            let args: Value = serde_json::from_str(&args)
                .map_err(|e| CliError::new(Failure::Usage, format!("--args: {e}")))?;
            let ctx = registry
                .load_functions(&LoadedContext::default(), &[tool.as_str()])
                .map_err(|e| CliError::new(Failure::Discovery, e.to_string()))?;
            let report: ProbeReport = runtime()
                .block_on(probe_call(&env, &ctx, &tool, &args, limit))
                .map_err(|e| CliError::new(Failure::Probe, e.to_string()))?;
            if structured {
                emit(out, &to_json(&report));
            } else {
                emit(out, &format!("{} {:?}", report.tool_name, report.verdict));
                report.stdout_lines.iter().for_each(|l| emit(out, l));
            }
            match report.verdict {
                ProbeVerdict::Grounded => Ok(()),
                other => Err(CliError::new(Failure::Probe, format!("verdict {other:?}"))),
            }
        }
        Command::Inspect {
            transcript,
            structured,
        } => {
            let path = resolve(&transcript, "transcript")?;
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::new(Failure::Input, format!("{}: {e}", path.display())))?;
            let transcript = Transcript::from_jsonl(&text)
                .map_err(|e| CliError::new(Failure::Input, format!("{}: {e}", path.display())))?;
            let summary = TranscriptSummary::of(&transcript);
            if structured {
                emit(out, &to_json(&summary));
            } else {
                emit(out, &format!("{} events", summary.events));
                for (name, n) in &summary.counts {
                    emit(out, &format!("  {name:<16} {n}"));
                }
                if let Some(h) = &summary.halted {
                    emit(out, &format!("halted in {h}"));
                }
                lines(&transcript).iter().for_each(|l| emit(out, l));
            }
            Ok(())
        }
    }
}

fn lines(transcript: &Transcript) -> Vec<String> {
    transcript
        .stdout_lines()
        .into_iter()
        .filter(|l| !l.starts_with("Raw response: "))
        .map(str::to_owned)
        .collect()
}

fn emit(out: &mut dyn Write, line: &str) {
    let _ = writeln!(out, "{line}");
}
