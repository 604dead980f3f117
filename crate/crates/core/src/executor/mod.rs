//! Bulk execution of schema-locked tool calls.
//!
//! [`run_batch`] fans tasks out under a fixed ceiling, retries transient
//! failures, validates every response against the tool's lock and records
//! finished task ids in an optional [`CheckpointStore`].

mod checkpoint;
mod retry;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::env::{Environment, ErrorClass, ToolError};
use crate::probe::Validation;
use crate::probe::{LockTable, LockedSchema};

pub use checkpoint::{CheckpointError, CheckpointStore};
pub use retry::{Retried, RetryError, RetryPolicy, with_retry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub tool_name: String,
    pub args: Value,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, tool_name: impl Into<String>, args: Value) -> Self {
        Self {
            task_id: task_id.into(),
            tool_name: tool_name.into(),
            args,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskError {
    #[error(transparent)]
    Tool(ToolError),
    #[error("response violates lock at {path}: expected {expected}, found {found}")]
    LockViolation {
        path: String,
        expected: String,
        found: String,
    },
    #[error("checkpoint write failed: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TaskOutcome {
    Success { value: Value, attempts: u32 },
    Failed { error: TaskError, attempts: u32 },
    Skipped,
}

impl TaskOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, TaskOutcome::Success { .. })
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, TaskOutcome::Skipped)
    }

    pub fn attempts(&self) -> u32 {
        match self {
            TaskOutcome::Success { attempts, .. } | TaskOutcome::Failed { attempts, .. } => {
                *attempts
            }
            TaskOutcome::Skipped => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// One outcome per task, in input order.
    pub outcomes: Vec<TaskOutcome>,
    /// Input indices in the order tasks finished.
    pub completion_order: Vec<usize>,
}

impl BatchResult {
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_success()).count()
    }

    pub fn skipped(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_skipped()).count()
    }

    pub fn failures(&self) -> usize {
        self.outcomes.len() - self.successes() - self.skipped()
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub max_in_flight: usize,
    pub policy: RetryPolicy,
    pub checkpoint: Option<Arc<CheckpointStore>>,
    /// Stop recording completions after this many and report
    /// [`BatchError::Interrupted`]. Simulates a crash mid-batch.
    pub halt_after: Option<usize>,
}

impl BatchOptions {
    pub fn new(max_in_flight: usize) -> Self {
        Self {
            max_in_flight,
            policy: RetryPolicy::default(),
            checkpoint: None,
            halt_after: None,
        }
    }

    pub fn policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn checkpoint(mut self, store: Arc<CheckpointStore>) -> Self {
        self.checkpoint = Some(store);
        self
    }

    pub fn halt_after(mut self, completed: usize) -> Self {
        self.halt_after = Some(completed);
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BatchError {
    #[error("max_in_flight must be at least 1")]
    InvalidConcurrency,
    #[error("invalid retry policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("no locked schema for `{0}`; probe it first")]
    SchemaNotLocked(String),
    #[error("checkpoint {0} is unavailable")]
    CheckpointUnavailable(PathBuf),
    #[error("task id `{0}` appears twice in the batch")]
    DuplicateTaskId(String),
    #[error("batch interrupted after {completed} completed tasks")]
    Interrupted { completed: usize },
}

enum Finished {
    Outcome(TaskOutcome),
    Halted,
}

/// Runs `tasks` with at most `options.max_in_flight` tool calls outstanding.
///
/// Checkpointed ids are skipped without calling the environment. A
/// successful response is validated against its lock and, when a store is
/// attached, recorded there before the outcome is reported.
pub async fn run_batch<E: Environment>(
    env: &E,
    locks: &LockTable,
    tasks: &[TaskSpec],
    options: &BatchOptions,
) -> Result<BatchResult, BatchError> {
    if options.max_in_flight == 0 {
        return Err(BatchError::InvalidConcurrency);
    }
    options.policy.check().map_err(BatchError::InvalidPolicy)?;
    let mut ids = HashSet::new();
    let mut task_locks = Vec::with_capacity(tasks.len());
    for task in tasks {
        if !ids.insert(task.task_id.as_str()) {
            return Err(BatchError::DuplicateTaskId(task.task_id.clone()));
        }
        let lock = locks
            .get(&task.tool_name)
            .ok_or_else(|| BatchError::SchemaNotLocked(task.tool_name.clone()))?;
        task_locks.push(lock);
    }
    if let Some(store) = &options.checkpoint {
        store
            .ensure_writable()
            .map_err(|_| BatchError::CheckpointUnavailable(store.path().to_path_buf()))?;
    }

    let budget = options.halt_after.map(AtomicUsize::new);
    let completion_order = Mutex::new(Vec::with_capacity(tasks.len()));
    let run_one = |index: usize| {
        let task = &tasks[index];
        let lock = &task_locks[index];
        let budget = budget.as_ref();
        let completion_order = &completion_order;
        async move {
            let finished = execute(env, task, lock, options, budget).await;
            completion_order.lock().expect("order poisoned").push(index);
            (index, finished)
        }
    };

    let mut slots: Vec<Option<TaskOutcome>> = vec![None; tasks.len()];
    let mut halted = false;
    let mut results = futures::stream::iter(0..tasks.len())
        .map(run_one)
        .buffer_unordered(options.max_in_flight);
    while let Some((index, finished)) = results.next().await {
        match finished {
            Finished::Outcome(outcome) => slots[index] = Some(outcome),
            Finished::Halted => halted = true,
        }
    }
    drop(results);
    if halted {
        let completed = slots
            .iter()
            .filter(|s| matches!(s, Some(TaskOutcome::Success { .. })))
            .count();
        return Err(BatchError::Interrupted { completed });
    }
    Ok(BatchResult {
        outcomes: slots
            .into_iter()
            .map(|s| s.expect("every task finishes"))
            .collect(),
        completion_order: completion_order.into_inner().expect("order poisoned"),
    })
}

async fn execute<E: Environment>(
    env: &E,
    task: &TaskSpec,
    lock: &LockedSchema,
    options: &BatchOptions,
    budget: Option<&AtomicUsize>,
) -> Finished {
    if let Some(store) = &options.checkpoint
        && store.is_processed(&task.task_id)
    {
        return Finished::Outcome(TaskOutcome::Skipped);
    }
    if budget.is_some_and(|b| b.load(Ordering::SeqCst) == 0) {
        return Finished::Halted;
    }
    let retried = match with_retry(env, &task.tool_name, &task.args, &options.policy).await {
        Ok(r) => r,
        Err(e) => {
            return Finished::Outcome(TaskOutcome::Failed {
                attempts: e.attempts(),
                error: TaskError::Tool(e.error().clone()),
            });
        }
    };
    if let Validation::Violation {
        path,
        expected,
        found,
    } = lock.validate(&retried.value)
    {
        return Finished::Outcome(TaskOutcome::Failed {
            error: TaskError::LockViolation {
                path: crate::probe::display_path(&path),
                expected: expected.to_string(),
                found: found.map_or("nothing".into(), |k| k.to_string()),
            },
            attempts: retried.attempts,
        });
    }
    // The side effect has happened; a crash now leaves it unrecorded.
    if let Some(b) = budget
        && b.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_err()
    {
        return Finished::Halted;
    }
    if let Some(store) = &options.checkpoint
        && let Err(e) = store.mark_processed(&task.task_id)
    {
        return Finished::Outcome(TaskOutcome::Failed {
            error: TaskError::Checkpoint(e.to_string()),
            attempts: retried.attempts,
        });
    }
    Finished::Outcome(TaskOutcome::Success {
        value: retried.value,
        attempts: retried.attempts,
    })
}

pub const CREATE_FOLDER_TOOL: &str = "onedrive__create_folder";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolderHandle {
    pub path: String,
    /// The folder was already there before the call.
    pub existed: bool,
}

/// Makes sure the drive folder `path` exists, creating missing ancestors.
///
/// Only `AlreadyExists` is absorbed; every other failure propagates.
pub async fn create_if_absent<E: Environment>(
    env: &E,
    path: &str,
) -> Result<FolderHandle, ToolError> {
    let parts: Vec<&str> = path.split('/').collect();
    if parts.iter().any(|p| p.trim().is_empty()) {
        return Err(ToolError::new(
            ErrorClass::BadRequest,
            format!("folder path `{path}` has an empty component"),
        ));
    }
    let mut parent = String::new();
    let mut existed = false;
    for name in parts {
        let args = json!({ "name": name, "parent_path": parent });
        existed = match env.call(CREATE_FOLDER_TOOL, &args).await {
            Ok(_) => false,
            Err(e) if e.class == ErrorClass::AlreadyExists => true,
            Err(e) => return Err(e),
        };
        parent = crate::mockenv::join_path(&parent, name);
    }
    Ok(FolderHandle {
        path: parent,
        existed,
    })
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::mockenv::{FaultRule, MockEnv, WorldState, fixture_now};
    use crate::probe::infer_shape;

    fn lock_for(tool: &str, sample: Value) -> LockTable {
        let shape = infer_shape(&[sample]).unwrap();
        let table = LockTable::new();
        table.insert(LockedSchema {
            tool_name: tool.into(),
            shape,
            envelope_path: Some(vec!["value".into()]),
            sample_count: 1,
            probe_args_digest: String::new(),
        });
        table
    }

    async fn list_lock(env: &MockEnv) -> LockTable {
        let sample = env.call("onedrive__list_items", &json!({})).await.unwrap();
        lock_for("onedrive__list_items", sample)
    }

    fn list_tasks(n: usize) -> Vec<TaskSpec> {
        (0..n)
            .map(|i| TaskSpec::new(format!("t{i}"), "onedrive__list_items", json!({})))
            .collect()
    }

    #[tokio::test(start_paused = true)]
    async fn unlocked_tool_is_refused() {
        let env = MockEnv::from_seed(0);
        let tasks = vec![TaskSpec::new("x", "outlook__list_emails", json!({}))];
        let err = run_batch(&env, &LockTable::new(), &tasks, &BatchOptions::new(4))
            .await
            .unwrap_err();
        assert_eq!(
            err,
            BatchError::SchemaNotLocked("outlook__list_emails".into())
        );
        assert_eq!(env.stats().total_calls(), 0);
    }

    #[tokio::test(start_paused = true)]
    async fn sequential_batch_keeps_input_order() {
        let env = MockEnv::from_seed(0).with_latency(Duration::from_millis(10));
        let locks = list_lock(&env).await;
        let r = run_batch(&env, &locks, &list_tasks(12), &BatchOptions::new(1))
            .await
            .unwrap();
        assert_eq!(r.completion_order, (0..12).collect::<Vec<_>>());
        assert_eq!(r.successes(), 12);
    }

    #[tokio::test(start_paused = true)]
    async fn ceiling_and_speedup() {
        let env = MockEnv::from_seed(0).with_latency(Duration::from_millis(10));
        let locks = list_lock(&env).await;
        env.reset_stats();
        let start = tokio::time::Instant::now();
        let r = run_batch(&env, &locks, &list_tasks(100), &BatchOptions::new(16))
            .await
            .unwrap();
        let elapsed = start.elapsed();
        assert_eq!(r.outcomes.len(), 100);
        assert!(env.stats().max_in_flight <= 16);
        assert!(elapsed >= Duration::from_millis(70), "{elapsed:?}");
        assert!(elapsed <= Duration::from_millis(1000 / 8), "{elapsed:?}");
    }

    #[tokio::test(start_paused = true)]
    async fn checkpointed_rerun_calls_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(CheckpointStore::open(dir.path().join("cp")).unwrap());
        let env = MockEnv::from_seed(0);
        let locks = list_lock(&env).await;
        let opts = BatchOptions::new(4).checkpoint(store.clone());
        run_batch(&env, &locks, &list_tasks(7), &opts)
            .await
            .unwrap();
        env.reset_stats();
        let again = run_batch(&env, &locks, &list_tasks(7), &opts)
            .await
            .unwrap();
        assert_eq!(again.skipped(), 7);
        assert_eq!(env.stats().total_calls(), 0);
    }

    #[tokio::test(start_paused = true)]
    async fn halt_after_interrupts_and_records_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(CheckpointStore::open(dir.path().join("cp")).unwrap());
        let env = MockEnv::from_seed(0);
        let locks = list_lock(&env).await;
        let opts = BatchOptions::new(1).checkpoint(store.clone()).halt_after(3);
        let err = run_batch(&env, &locks, &list_tasks(7), &opts)
            .await
            .unwrap_err();
        assert_eq!(err, BatchError::Interrupted { completed: 3 });
        assert_eq!(store.len(), 3);
    }

    #[tokio::test(start_paused = true)]
    async fn response_is_validated_against_lock() {
        let env = MockEnv::from_seed(0);
        let locks = lock_for("onedrive__list_items", json!({"value": "not an array"}));
        let r = run_batch(&env, &locks, &list_tasks(1), &BatchOptions::new(1))
            .await
            .unwrap();
        assert!(matches!(
            &r.outcomes[0],
            TaskOutcome::Failed {
                error: TaskError::LockViolation { .. },
                ..
            }
        ));
    }

    #[tokio::test(start_paused = true)]
    async fn duplicate_ids_and_zero_concurrency() {
        let env = MockEnv::from_seed(0);
        let locks = list_lock(&env).await;
        let mut tasks = list_tasks(2);
        tasks[1].task_id = "t0".into();
        assert_eq!(
            run_batch(&env, &locks, &tasks, &BatchOptions::new(1))
                .await
                .unwrap_err(),
            BatchError::DuplicateTaskId("t0".into())
        );
        assert_eq!(
            run_batch(&env, &locks, &list_tasks(1), &BatchOptions::new(0))
                .await
                .unwrap_err(),
            BatchError::InvalidConcurrency
        );
    }

    #[tokio::test(start_paused = true)]
    async fn create_if_absent_twice() {
        let env = MockEnv::new(WorldState::empty(fixture_now()));
        let path = "Email Attachments December/Acme";
        let first = create_if_absent(&env, path).await.unwrap();
        assert!(!first.existed);
        let before = env.snapshot();
        let second = create_if_absent(&env, path).await.unwrap();
        assert!(second.existed);
        assert_eq!(second.path, path);
        assert_eq!(env.snapshot(), before);
    }

    #[tokio::test(start_paused = true)]
    async fn create_if_absent_propagates_other_errors() {
        let env = MockEnv::new(WorldState::empty(fixture_now())).with_faults(vec![FaultRule::new(
            CREATE_FOLDER_TOOL,
            1,
            ErrorClass::PermissionDenied,
        )]);
        let err = create_if_absent(&env, "A/B").await.unwrap_err();
        assert_eq!(err.class, ErrorClass::PermissionDenied);
        assert!(create_if_absent(&env, "A//B").await.is_err());
    }
}
