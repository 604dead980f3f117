//! End-to-end orchestration: discover, plan, probe-then-execute, freeze.
//!
//! [`run_pipeline`] drives a [`Planner`] through discovery, writes its plan
//! to the anchor, asks the memory question, then executes each plan item
//! while it is the anchor's current step. The result is a [`SkillArtifact`]
//! that [`replay_skill`] can run again without any discovery or probing.

mod engine;
pub mod naming;
mod planner;
mod skill;
mod transcript;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};

use crate::anchor::{AnchorError, TodoList, parse_anchor, write_todos};
use crate::env::Environment;
use crate::executor::{CheckpointStore, RetryPolicy};
use crate::mockenv::fixture_now;
use crate::probe::{LockTable, MAX_PROBE_LIMIT};
use crate::registry::{
    CoverageReport, DEFAULT_CONTEXT_BUDGET_BYTES, DEFAULT_K, LoadedContext, Registry,
    RegistryError, Resolution, SearchRequest,
};

pub use engine::{Candidate, ExecError, Route};
pub use naming::{CompanyRule, NamingError, NamingRule, extract_company, name_document};
pub use planner::{
    PLAN_FETCH, PLAN_LOAD, PLAN_SAMPLE, PLAN_UPLOAD, Planner, ProbeDecision, ScriptedPlanner,
    StepAction,
};
pub use skill::{
    ReplayOptions, RunParams, SKILL_FORMAT_VERSION, SkillArtifact, SkillError, ToolRef, emit_skill,
    load_skill, replay_skill,
};
pub use transcript::{Event, SearchHit, TaskLine, Transcript};

use engine::{Engine, ExecParams, Prober};

/// The goal the scripted planner is written for.
pub const RUNNING_EXAMPLE_GOAL: &str = "Scan the last 15 days of Outlook emails for PDF or XLSX attachments, skip mail from internal senders at agentr.dev, and file the rest into OneDrive folders named after each sender's company.";

pub const MEMORY_PROMPT: &str = "Keep a checkpoint file of processed attachments so a rerun skips finished work instead of repeating it?";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemoryChoice {
    Decline,
    Accept { checkpoint: PathBuf },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Clock the filter window and folder month are computed from.
    pub run_clock: DateTime<Utc>,
    pub memory: MemoryChoice,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub search_k: usize,
    pub refine_budget: u32,
    pub context_budget_bytes: usize,
    pub probe_limit: u32,
    /// Rebuild the planner's view of the plan from the rendered anchor alone
    /// before every step.
    pub flush_context: bool,
    /// Crash the upload batch after this many recorded completions.
    pub halt_uploads_after: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            run_clock: fixture_now(),
            memory: MemoryChoice::Decline,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            search_k: DEFAULT_K,
            refine_budget: 3,
            context_budget_bytes: DEFAULT_CONTEXT_BUDGET_BYTES,
            probe_limit: MAX_PROBE_LIMIT,
            flush_context: false,
            halt_uploads_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryDecision {
    pub prompt: String,
    pub accepted: bool,
    pub checkpoint: Option<PathBuf>,
}

/// Poses the checkpoint question; the answer comes from configuration.
pub fn propose_memory(config: &PipelineConfig) -> MemoryDecision {
    match &config.memory {
        MemoryChoice::Decline => MemoryDecision {
            prompt: MEMORY_PROMPT.to_owned(),
            accepted: false,
            checkpoint: None,
        },
        MemoryChoice::Accept { checkpoint } => MemoryDecision {
            prompt: MEMORY_PROMPT.to_owned(),
            accepted: true,
            checkpoint: Some(checkpoint.clone()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("discovery failed: {0}")]
    DiscoveryFailed(String),
    #[error("probe refused: {0}")]
    ProbeRefused(ExecError),
    #[error("plan rejected: {0}")]
    PlanRejected(String),
    #[error("execution failed: {0}")]
    ExecutionFailed(ExecError),
    #[error("lock mismatch on `{tool}`: {detail}")]
    LockMismatch { tool: String, detail: String },
    #[error("invalid skill: {0}")]
    InvalidSkill(String),
}

impl PipelineError {
    pub fn phase(&self) -> &'static str {
        match self {
            PipelineError::DiscoveryFailed(_) => "discovery",
            PipelineError::ProbeRefused(_) => "probe",
            PipelineError::PlanRejected(_) => "plan",
            PipelineError::ExecutionFailed(_) => "execution",
            PipelineError::LockMismatch { .. } => "replay",
            PipelineError::InvalidSkill(_) => "skill",
        }
    }

    fn from_exec(error: ExecError) -> Self {
        match error {
            ExecError::ProbeRefused { .. } | ExecError::Probe(_) | ExecError::Lock(_) => {
                PipelineError::ProbeRefused(error)
            }
            other => PipelineError::ExecutionFailed(other),
        }
    }
}

impl From<RegistryError> for PipelineError {
    fn from(e: RegistryError) -> Self {
        PipelineError::DiscoveryFailed(e.to_string())
    }
}

impl From<AnchorError> for PipelineError {
    fn from(e: AnchorError) -> Self {
        PipelineError::PlanRejected(e.to_string())
    }
}

/// A failed run together with everything it recorded up to the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct PipelineFailure {
    pub error: PipelineError,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub artifact: SkillArtifact,
    pub transcript: Transcript,
    pub coverage: CoverageReport,
    pub routes: Vec<Route>,
    /// Files newly written by the upload step.
    pub uploaded: usize,
    /// Uploads that found identical content already in place.
    pub unchanged: usize,
}

fn fail(transcript: &mut Transcript, error: PipelineError) -> PipelineFailure {
    transcript.push(Event::Halted {
        phase: error.phase().to_owned(),
        reason: error.to_string(),
    });
    PipelineFailure {
        error,
        transcript: std::mem::take(transcript),
    }
}

/// Discovery: one combined search per app, then the refine loop per need.
fn discover<P: Planner>(
    goal: &str,
    registry: &Registry,
    planner: &mut P,
    config: &PipelineConfig,
    transcript: &mut Transcript,
) -> Result<(CoverageReport, Vec<String>), PipelineError> {
    let apps = registry.list_apps();
    transcript.push(Event::AppsListed { apps: apps.clone() });
    let capabilities = planner.propose_capability_queries(goal, &apps);
    if capabilities.is_empty() {
        return Err(PipelineError::DiscoveryFailed(
            "planner proposed no capabilities".into(),
        ));
    }

    let mut per_app: BTreeMap<Option<String>, Vec<&str>> = BTreeMap::new();
    let mut app_order = Vec::new();
    for c in &capabilities {
        if !per_app.contains_key(&c.app_id) {
            app_order.push(c.app_id.clone());
        }
        per_app.entry(c.app_id.clone()).or_default().push(&c.need);
    }
    let requests: Vec<SearchRequest> = app_order
        .iter()
        .map(|app| {
            let mut r = SearchRequest::new(per_app[app].join(" ")).top(config.search_k);
            r.app_id = app.clone();
            r
        })
        .collect();
    for response in registry.search_functions(&requests)? {
        transcript.push(Event::Search {
            request: response.request,
            results: response
                .results
                .into_iter()
                .map(|r| SearchHit {
                    name: r.name,
                    score: r.score,
                })
                .collect(),
        });
    }

    let coverage = registry.refine_search(&capabilities, config.refine_budget, config.search_k)?;
    for q in &coverage.queries {
        transcript.push(Event::Refine {
            need: q.need.clone(),
            round: q.round,
            query: q.query.clone(),
        });
    }
    for c in &coverage.coverage {
        let (tool, round) = match &c.resolution {
            Resolution::Resolved { tool, round, .. } => (Some(tool.clone()), Some(*round)),
            Resolution::Unresolved => (None, None),
        };
        transcript.push(Event::Resolved {
            need: c.capability.need.clone(),
            tool,
            round,
        });
    }
    let missing: Vec<&str> = coverage.unresolved().map(|c| c.need.as_str()).collect();
    if !missing.is_empty() {
        return Err(PipelineError::DiscoveryFailed(format!(
            "no tool found for: {}",
            missing.join(", ")
        )));
    }
    let tools = planner.choose_tools(&coverage);
    if tools.is_empty() {
        return Err(PipelineError::DiscoveryFailed(
            "planner chose no tools".into(),
        ));
    }
    Ok((coverage, tools))
}

fn record_anchor(transcript: &mut Transcript, list: &TodoList) {
    transcript.push(Event::Anchor {
        revision: list.revision,
        render: list.render(),
    });
}

/// Runs the whole workflow for `goal`.
pub async fn run_pipeline<E: Environment, P: Planner>(
    goal: &str,
    registry: &Registry,
    env: &E,
    planner: &mut P,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineFailure> {
    let mut transcript = Transcript::default();
    transcript.push(Event::Goal {
        text: goal.to_owned(),
    });

    let (coverage, tools) = match discover(goal, registry, planner, config, &mut transcript) {
        Ok(found) => found,
        Err(e) => return Err(fail(&mut transcript, e)),
    };

    let plan = planner.propose_plan(&tools);
    let mut todo = match write_todos(&TodoList::default(), plan) {
        Ok(list) => list,
        Err(e) => return Err(fail(&mut transcript, e.into())),
    };
    record_anchor(&mut transcript, &todo);

    let memory = propose_memory(config);
    transcript.push(Event::MemoryProposal {
        prompt: memory.prompt.clone(),
        accepted: memory.accepted,
    });
    let checkpoint = match &memory.checkpoint {
        Some(path) => match CheckpointStore::open(path) {
            Ok(store) => Some(Arc::new(store)),
            Err(e) => {
                let error = PipelineError::ExecutionFailed(ExecError::Batch {
                    tool: "checkpoint".into(),
                    error: crate::executor::BatchError::CheckpointUnavailable(path.clone()),
                });
                transcript.stdout(e.to_string());
                return Err(fail(&mut transcript, error));
            }
        },
        None => None,
    };

    let ctx = match registry.load_functions(
        &LoadedContext::with_budget(config.context_budget_bytes),
        &tools,
    ) {
        Ok(ctx) => ctx,
        Err(e) => return Err(fail(&mut transcript, e.into())),
    };
    transcript.push(Event::Load {
        tools: ctx.names().map(str::to_owned).collect(),
        schema_bytes: ctx.schema_bytes(),
    });

    let locks = LockTable::new();
    let params = ExecParams {
        max_in_flight: config.max_in_flight,
        retry: config.retry.clone(),
        checkpoint: checkpoint.clone(),
        halt_uploads_after: config.halt_uploads_after,
        run_clock: config.run_clock,
    };
    let mut engine = Engine::new(env, &locks, params, transcript);
    let mut step_actions = Vec::new();

    loop {
        let current = if config.flush_context {
            let render = todo.render();
            let seen = match parse_anchor(&render) {
                Ok(list) => list.current_step().cloned(),
                Err(e) => return Err(fail(&mut engine.transcript, e.into())),
            };
            engine.transcript.push(Event::ContextFlush {
                current_step: seen.as_ref().map(|i| i.content.clone()),
            });
            if seen.as_ref() != todo.current_step() {
                let e = PipelineError::PlanRejected("anchor render lost the current step".into());
                return Err(fail(&mut engine.transcript, e));
            }
            seen
        } else {
            todo.current_step().cloned()
        };
        let Some(current) = current else { break };

        if current.status == crate::anchor::TodoStatus::Pending {
            todo = match write_todos(&todo, todo.with_started(&current.content)) {
                Ok(list) => list,
                Err(e) => return Err(fail(&mut engine.transcript, e.into())),
            };
            record_anchor(&mut engine.transcript, &todo);
        }

        let actions = match planner.derive_step_action(&current, &locks.all(), &todo.render()) {
            Ok(actions) => actions,
            Err(reason) => {
                return Err(fail(
                    &mut engine.transcript,
                    PipelineError::PlanRejected(reason),
                ));
            }
        };
        for action in &actions {
            if let Err(reason) = action.check() {
                return Err(fail(
                    &mut engine.transcript,
                    PipelineError::PlanRejected(reason),
                ));
            }
            engine.transcript.push(Event::StepStarted {
                item: current.content.clone(),
                action: action.kind().to_owned(),
            });
            let mut prober = Some(Prober {
                ctx: &ctx,
                planner: &mut *planner,
                limit: config.probe_limit,
            });
            if let Err(e) = engine.execute(action, &mut prober).await {
                return Err(fail(&mut engine.transcript, PipelineError::from_exec(e)));
            }
            step_actions.push(action.clone());
        }

        todo = match write_todos(&todo, todo.with_completed(&current.content)) {
            Ok(list) => list,
            Err(e) => return Err(fail(&mut engine.transcript, e.into())),
        };
        record_anchor(&mut engine.transcript, &todo);
    }
    engine.transcript.push(Event::Done);

    let lock_list = locks.all();
    let tool_refs = tools
        .iter()
        .map(|name| ToolRef {
            name: name.clone(),
            lock_digest: lock_list
                .iter()
                .find(|l| &l.tool_name == name)
                .map(|l| l.digest()),
        })
        .collect();
    let artifact = SkillArtifact {
        format_version: SKILL_FORMAT_VERSION,
        goal: goal.to_owned(),
        tools: tool_refs,
        locks: lock_list,
        plan: todo,
        step_actions,
        run: RunParams {
            max_in_flight: config.max_in_flight,
            retry: config.retry.clone(),
            checkpoint: memory.checkpoint,
            run_clock: config.run_clock,
        },
    };
    let uploaded = engine.state.uploaded;
    let unchanged = engine.state.unchanged;
    let routes = std::mem::take(&mut engine.state.routes);
    Ok(PipelineRun {
        artifact,
        transcript: engine.transcript,
        coverage,
        routes,
        uploaded,
        unchanged,
    })
}
