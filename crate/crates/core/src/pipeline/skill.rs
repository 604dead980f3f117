use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::engine::{Engine, ExecError, ExecParams, Prober};
use super::planner::{ScriptedPlanner, StepAction};
use super::transcript::{Event, Transcript};
use super::{PipelineError, PipelineFailure, fail};
use crate::anchor::TodoList;
use crate::env::Environment;
use crate::executor::{BatchError, CheckpointStore, RetryPolicy};
use crate::probe::{LockTable, LockedSchema};

pub const SKILL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRef {
    pub name: String,
    /// Digest of the lock the tool ran under; absent for tools that were
    /// never called in bulk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub run_clock: DateTime<Utc>,
}

/// A frozen workflow: the locks it was verified against, the finished plan
/// and the exact actions that ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillArtifact {
    pub format_version: u32,
    pub goal: String,
    pub tools: Vec<ToolRef>,
    pub locks: Vec<LockedSchema>,
    pub plan: TodoList,
    pub step_actions: Vec<StepAction>,
    pub run: RunParams,
}

impl SkillArtifact {
    pub fn check(&self) -> Result<(), String> {
        if self.format_version != SKILL_FORMAT_VERSION {
            return Err(format!(
                "format version {} is not supported (expected {SKILL_FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.plan.items.is_empty() || !self.plan.is_complete() {
            return Err("plan is not fully completed".into());
        }
        for tool in &self.tools {
            let Some(digest) = &tool.lock_digest else {
                continue;
            };
            match self.locks.iter().find(|l| l.tool_name == tool.name) {
                Some(lock) if &lock.digest() == digest => {}
                Some(_) => {
                    return Err(format!(
                        "lock for `{}` does not match its digest",
                        tool.name
                    ));
                }
                None => return Err(format!("no lock recorded for `{}`", tool.name)),
            }
        }
        self.step_actions.iter().try_for_each(StepAction::check)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SkillError {
    #[error("skill file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("skill file {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub fn emit_skill(artifact: &SkillArtifact, path: &Path) -> Result<(), SkillError> {
    let text = serde_json::to_string_pretty(artifact).expect("artifact serializes") + "\n";
    std::fs::write(path, text).map_err(|source| SkillError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_skill(path: &Path) -> Result<SkillArtifact, SkillError> {
    let text = std::fs::read_to_string(path).map_err(|source| SkillError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| SkillError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Checkpoint to resume with. The one recorded in the artifact belongs to
    /// the original environment and is not reused implicitly.
    pub checkpoint: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
}

/// Executes a skill's actions directly under its recorded locks. Nothing is
/// searched, loaded or probed; a response that drifted from its lock aborts
/// with [`PipelineError::LockMismatch`].
pub async fn replay_skill<E: Environment>(
    artifact: &SkillArtifact,
    env: &E,
    options: &ReplayOptions,
) -> Result<Transcript, PipelineFailure> {
    let mut transcript = Transcript::default();
    transcript.push(Event::Replay {
        format_version: artifact.format_version,
        goal: artifact.goal.clone(),
    });
    if let Err(reason) = artifact.check() {
        return Err(fail(&mut transcript, PipelineError::InvalidSkill(reason)));
    }
    let checkpoint = match &options.checkpoint {
        Some(path) => match CheckpointStore::open(path) {
            Ok(store) => Some(Arc::new(store)),
            Err(_) => {
                let error = PipelineError::ExecutionFailed(ExecError::Batch {
                    tool: "checkpoint".into(),
                    error: BatchError::CheckpointUnavailable(path.clone()),
                });
                return Err(fail(&mut transcript, error));
            }
        },
        None => None,
    };
    let locks = LockTable::from(artifact.locks.clone());
    let params = ExecParams {
        max_in_flight: options.max_in_flight.unwrap_or(artifact.run.max_in_flight),
        retry: artifact.run.retry.clone(),
        checkpoint,
        halt_uploads_after: None,
        run_clock: artifact.run.run_clock,
    };
    let mut engine = Engine::new(env, &locks, params, transcript);
    for action in &artifact.step_actions {
        engine.transcript.push(Event::StepStarted {
            item: String::new(),
            action: action.kind().to_owned(),
        });
        let mut no_probe: Option<Prober<'_, ScriptedPlanner>> = None;
        if let Err(e) = engine.execute(action, &mut no_probe).await {
            let error = match e {
                ExecError::LockViolation { tool, detail } => {
                    PipelineError::LockMismatch { tool, detail }
                }
                ExecError::Batch {
                    error: BatchError::SchemaNotLocked(tool),
                    ..
                } => PipelineError::InvalidSkill(format!("no lock recorded for `{tool}`")),
                other => PipelineError::ExecutionFailed(other),
            };
            return Err(fail(&mut engine.transcript, error));
        }
    }
    engine.transcript.push(Event::Done);
    Ok(engine.transcript)
}
