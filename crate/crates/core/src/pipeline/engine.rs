//! Executes [`StepAction`]s against an environment. Shared by live runs,
//! which probe and lock tools on first use, and by replays, which only use
//! the locks frozen into a skill.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use super::naming::{
    NameAllocator, NamingError, extract_company, has_allowed_extension, is_internal, month_name,
    name_document, render_folder,
};
use super::planner::{Planner, ProbeDecision, StepAction};
use super::transcript::{Event, TaskLine, Transcript};
use crate::env::{Environment, ToolError};
use crate::executor::{
    BatchError, BatchOptions, BatchResult, CheckpointStore, RetryPolicy, TaskError, TaskOutcome,
    TaskSpec, create_if_absent,
};
use crate::probe::{LockError, LockTable, ProbeError, ProbeVerdict, probe_call};
use crate::registry::LoadedContext;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("batch of `{tool}` did not run: {error}")]
    Batch { tool: String, error: BatchError },
    #[error("{failed} task(s) of `{tool}` failed; first: {first}")]
    TaskFailures {
        tool: String,
        failed: usize,
        first: String,
    },
    #[error("`{tool}` response no longer matches its lock: {detail}")]
    LockViolation { tool: String, detail: String },
    #[error("`{tool}` returned an unusable record: {detail}")]
    Malformed { tool: String, detail: String },
    #[error("folder setup failed: {0}")]
    Folder(ToolError),
    #[error(transparent)]
    Naming(#[from] NamingError),
    #[error("probe of `{tool}` was refused: {reason}")]
    ProbeRefused { tool: String, reason: String },
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error("step out of order: {0}")]
    Order(String),
}

/// An attachment that passed the fetch filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub task_id: String,
    pub message_id: String,
    pub attachment_id: String,
    pub sender: String,
    pub received_at: DateTime<Utc>,
    pub filename: String,
}

/// Where a candidate ends up on the drive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub candidate: Candidate,
    pub company: String,
    pub folder: String,
    pub document: String,
}

#[derive(Debug, Clone)]
pub(crate) struct ExecParams {
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub checkpoint: Option<Arc<CheckpointStore>>,
    pub halt_uploads_after: Option<usize>,
    pub run_clock: DateTime<Utc>,
}

/// What a live run needs to probe a tool it has not locked yet.
pub(crate) struct Prober<'a, P> {
    pub ctx: &'a LoadedContext,
    pub planner: &'a mut P,
    pub limit: u32,
}

#[derive(Debug, Default)]
pub(crate) struct WorkState {
    pub fetched: bool,
    pub allowed: Vec<String>,
    pub candidates: Vec<Candidate>,
    pub routes: Vec<Route>,
    pub sample_content: Option<String>,
    pub uploaded: usize,
    pub unchanged: usize,
}

pub(crate) struct Engine<'a, E> {
    pub env: &'a E,
    pub locks: &'a LockTable,
    pub params: ExecParams,
    pub transcript: Transcript,
    pub state: WorkState,
}

fn text<'v>(value: &'v Value, path: &[&str]) -> Option<&'v str> {
    path.iter().try_fold(value, |v, k| v.get(k))?.as_str()
}

impl<'a, E: Environment> Engine<'a, E> {
    pub fn new(
        env: &'a E,
        locks: &'a LockTable,
        params: ExecParams,
        transcript: Transcript,
    ) -> Self {
        Self {
            env,
            locks,
            params,
            transcript,
            state: WorkState::default(),
        }
    }

    pub async fn execute<P: Planner>(
        &mut self,
        action: &StepAction,
        prober: &mut Option<Prober<'_, P>>,
    ) -> Result<(), ExecError> {
        match action {
            StepAction::FetchFilter {
                list_tool,
                window_days,
                extensions,
                internal_domains,
                page_size,
            } => {
                self.fetch_filter(
                    list_tool,
                    *window_days,
                    extensions,
                    internal_domains,
                    *page_size,
                    prober,
                )
                .await
            }
            StepAction::ExtractRoute {
                download_tool,
                folder_template,
                ..
            } => {
                self.extract_route(download_tool, folder_template, prober)
                    .await
            }
            StepAction::EnsureFolders { folder_template } => {
                self.ensure_folders(folder_template).await
            }
            StepAction::UploadBatch {
                download_tool,
                upload_tool,
            } => self.upload_batch(download_tool, upload_tool, prober).await,
        }
    }

    /// Probes and locks `tool` unless a lock exists or no prober is given.
    /// Returns the raw probe samples when a probe ran.
    async fn ensure_lock<P: Planner>(
        &mut self,
        tool: &str,
        args: &Value,
        prober: &mut Option<Prober<'_, P>>,
    ) -> Result<Option<Vec<Value>>, ExecError> {
        if self.locks.contains(tool) {
            return Ok(None);
        }
        let Some(prober) = prober.as_mut() else {
            return Ok(None);
        };
        let report = probe_call(self.env, prober.ctx, tool, args, prober.limit).await?;
        self.transcript.push(Event::Probe {
            tool: tool.to_owned(),
            args: report.args.clone(),
            limit: report.limit,
            verdict: serde_json::to_value(report.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            stdout: report.stdout_lines.clone(),
        });
        let decision = prober.planner.review_probe(&report);
        let reason = match &decision {
            ProbeDecision::Proceed => None,
            ProbeDecision::Revise { reason } => Some(reason.clone()),
        };
        self.transcript.push(Event::ProbeReview {
            tool: tool.to_owned(),
            proceed: reason.is_none(),
            reason: reason.clone(),
        });
        if let Some(reason) = reason {
            return Err(ExecError::ProbeRefused {
                tool: tool.to_owned(),
                reason,
            });
        }
        if report.verdict != ProbeVerdict::Grounded {
            return Err(ExecError::ProbeRefused {
                tool: tool.to_owned(),
                reason: format!("planner proceeded on a {:?} probe", report.verdict),
            });
        }
        let lock = self.locks.lock_schema(tool, &report)?;
        self.transcript.push(Event::Lock {
            tool: tool.to_owned(),
            digest: lock.digest(),
        });
        Ok(Some(report.raw_samples))
    }

    async fn batch(
        &mut self,
        tool: &str,
        tasks: &[TaskSpec],
        options: &BatchOptions,
    ) -> Result<BatchResult, ExecError> {
        let result = crate::executor::run_batch(self.env, self.locks, tasks, options).await;
        let result = match result {
            Ok(r) => r,
            Err(error) => {
                return Err(ExecError::Batch {
                    tool: tool.to_owned(),
                    error,
                });
            }
        };
        self.transcript.push(Event::Batch {
            tool: tool.to_owned(),
            tasks: tasks
                .iter()
                .zip(&result.outcomes)
                .map(|(t, o)| TaskLine {
                    task_id: t.task_id.clone(),
                    outcome: match o {
                        TaskOutcome::Success { .. } => "success".into(),
                        TaskOutcome::Skipped => "skipped".into(),
                        TaskOutcome::Failed { error, .. } => format!("failed: {error}"),
                    },
                    attempts: o.attempts(),
                })
                .collect(),
        });
        let failures: Vec<&TaskError> = result
            .outcomes
            .iter()
            .filter_map(|o| match o {
                TaskOutcome::Failed { error, .. } => Some(error),
                _ => None,
            })
            .collect();
        if let Some(violation) = failures
            .iter()
            .find(|e| matches!(e, TaskError::LockViolation { .. }))
        {
            return Err(ExecError::LockViolation {
                tool: tool.to_owned(),
                detail: violation.to_string(),
            });
        }
        if let Some(first) = failures.first() {
            return Err(ExecError::TaskFailures {
                tool: tool.to_owned(),
                failed: failures.len(),
                first: first.to_string(),
            });
        }
        Ok(result)
    }

    fn plain_options(&self) -> BatchOptions {
        BatchOptions::new(self.params.max_in_flight).policy(self.params.retry.clone())
    }

    fn payload(&self, tool: &str, value: &Value) -> Result<Vec<Value>, ExecError> {
        let lock = self.locks.get(tool).ok_or_else(|| ExecError::Batch {
            tool: tool.to_owned(),
            error: BatchError::SchemaNotLocked(tool.to_owned()),
        })?;
        lock.extract_payload(value)
            .cloned()
            .ok_or_else(|| ExecError::LockViolation {
                tool: tool.to_owned(),
                detail: "payload not found under the locked envelope".into(),
            })
    }

    async fn fetch_filter<P: Planner>(
        &mut self,
        list_tool: &str,
        window_days: i64,
        extensions: &[String],
        internal_domains: &[String],
        page_size: u32,
        prober: &mut Option<Prober<'_, P>>,
    ) -> Result<(), ExecError> {
        let after = self.params.run_clock - Duration::days(window_days);
        let filter = json!({
            "received_after": after.to_rfc3339_opts(SecondsFormat::Secs, true),
            "has_attachments": true,
        });
        self.ensure_lock(list_tool, &json!({ "filter": filter }), prober)
            .await?;

        let mut messages = Vec::new();
        let mut skip = 0u64;
        loop {
            let task = TaskSpec::new(
                format!("page@{skip}"),
                list_tool,
                json!({ "filter": filter, "top": page_size, "skip": skip }),
            );
            let result = self
                .batch(list_tool, &[task], &self.plain_options())
                .await?;
            let TaskOutcome::Success { value, .. } = &result.outcomes[0] else {
                return Err(ExecError::Order("page fetch produced no response".into()));
            };
            let page = self.payload(list_tool, value)?;
            let len = page.len();
            messages.extend(page);
            if len < page_size as usize {
                break;
            }
            skip += page_size as u64;
        }
        self.transcript.stdout(format!(
            "Fetched {} emails with attachments.",
            messages.len()
        ));

        let mut candidates = Vec::new();
        let (mut internal, mut external, mut other_files) = (0, 0, 0);
        for record in &messages {
            let malformed = |detail: &str| ExecError::Malformed {
                tool: list_tool.to_owned(),
                detail: detail.to_owned(),
            };
            let message_id = text(record, &["id"]).ok_or_else(|| malformed("missing id"))?;
            let sender = text(record, &["from", "emailAddress", "address"])
                .ok_or_else(|| malformed("missing sender address"))?;
            let received = text(record, &["receivedDateTime"])
                .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
                .ok_or_else(|| malformed("missing or invalid receivedDateTime"))?
                .with_timezone(&Utc);
            if is_internal(sender, internal_domains) {
                internal += 1;
                continue;
            }
            external += 1;
            let attachments = record
                .get("attachments")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing attachments"))?;
            for att in attachments {
                let attachment_id =
                    text(att, &["id"]).ok_or_else(|| malformed("attachment without id"))?;
                let filename =
                    text(att, &["name"]).ok_or_else(|| malformed("attachment without name"))?;
                if !has_allowed_extension(filename, extensions) {
                    other_files += 1;
                    continue;
                }
                candidates.push(Candidate {
                    task_id: format!("{message_id}/{attachment_id}"),
                    message_id: message_id.to_owned(),
                    attachment_id: attachment_id.to_owned(),
                    sender: sender.to_owned(),
                    received_at: received,
                    filename: filename.to_owned(),
                });
            }
        }
        candidates.sort_by(|a, b| {
            (a.received_at, &a.message_id, &a.attachment_id).cmp(&(
                b.received_at,
                &b.message_id,
                &b.attachment_id,
            ))
        });
        self.transcript.stdout(format!(
            "Kept {} attachment(s) from {external} external email(s); skipped {internal} internal email(s) and {other_files} other attachment(s).",
            candidates.len()
        ));
        self.state = WorkState {
            fetched: true,
            allowed: extensions.to_vec(),
            candidates,
            ..WorkState::default()
        };
        Ok(())
    }

    async fn extract_route<P: Planner>(
        &mut self,
        download_tool: &str,
        folder_template: &str,
        prober: &mut Option<Prober<'_, P>>,
    ) -> Result<(), ExecError> {
        if !self.state.fetched {
            return Err(ExecError::Order("routing requires a fetch first".into()));
        }
        let Some(first) = self.state.candidates.first().cloned() else {
            self.transcript.stdout("No attachments to route.");
            return Ok(());
        };
        let sample_args = json!({
            "message_id": first.message_id,
            "attachment_id": first.attachment_id,
        });
        if let Some(samples) = self
            .ensure_lock(download_tool, &sample_args, prober)
            .await?
        {
            let payload = self.payload(download_tool, &samples[0])?;
            self.state.sample_content = payload
                .first()
                .and_then(|r| r.get("contentBytes"))
                .and_then(Value::as_str)
                .map(str::to_owned);
        }

        let month = month_name(&self.params.run_clock);
        let mut names = NameAllocator::default();
        let mut routes = Vec::new();
        for c in &self.state.candidates {
            let company = match extract_company(&c.sender) {
                Ok(company) => company,
                Err(e) => {
                    self.transcript
                        .stdout(format!("Skipped {}: {e}", c.task_id));
                    continue;
                }
            };
            let folder = render_folder(folder_template, &month, &company)?;
            let document = names.allocate(
                &folder,
                &name_document(&c.received_at, &c.filename, &self.state.allowed)?,
            );
            routes.push(Route {
                candidate: c.clone(),
                company,
                folder,
                document,
            });
        }
        if let Some(r) = routes.first() {
            self.transcript.stdout(format!(
                "Sample: {} from {} -> {}/{}",
                r.candidate.filename, r.candidate.sender, r.folder, r.document
            ));
        }
        let folders: BTreeSet<&str> = routes.iter().map(|r| r.folder.as_str()).collect();
        self.transcript.stdout(format!(
            "Routed {} attachment(s) into {} folder(s).",
            routes.len(),
            folders.len()
        ));
        self.state.routes = routes;
        Ok(())
    }

    async fn ensure_folders(&mut self, folder_template: &str) -> Result<(), ExecError> {
        let month = month_name(&self.params.run_clock);
        let mut folders = BTreeSet::new();
        for r in &self.state.routes {
            let expected = render_folder(folder_template, &month, &r.company)?;
            if expected != r.folder {
                return Err(ExecError::Order(format!(
                    "route folder `{}` disagrees with template folder `{expected}`",
                    r.folder
                )));
            }
            folders.insert(expected);
        }
        let mut created = 0;
        for folder in &folders {
            let handle = self
                .create_with_retry(folder)
                .await
                .map_err(ExecError::Folder)?;
            if !handle.existed {
                created += 1;
            }
            self.transcript.push(Event::Folder {
                path: handle.path,
                existed: handle.existed,
            });
        }
        self.transcript.stdout(format!(
            "Ensured {} folder(s), {created} newly created.",
            folders.len()
        ));
        Ok(())
    }

    async fn create_with_retry(
        &self,
        folder: &str,
    ) -> Result<crate::executor::FolderHandle, ToolError> {
        let policy = &self.params.retry;
        let mut attempt = 1;
        loop {
            match create_if_absent(self.env, folder).await {
                Err(e) if policy.retryable.contains(&e.class) && attempt < policy.max_attempts => {
                    tokio::time::sleep(policy.delay_after(attempt)).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    async fn upload_batch<P: Planner>(
        &mut self,
        download_tool: &str,
        upload_tool: &str,
        prober: &mut Option<Prober<'_, P>>,
    ) -> Result<(), ExecError> {
        if self.state.routes.is_empty() {
            self.transcript.stdout("Nothing to upload.");
            return Ok(());
        }
        let checkpoint = self.params.checkpoint.clone();
        let processed = |id: &str| checkpoint.as_ref().is_some_and(|s| s.is_processed(id));

        let downloads: Vec<TaskSpec> = self
            .state
            .routes
            .iter()
            .filter(|r| !processed(&r.candidate.task_id))
            .map(|r| {
                TaskSpec::new(
                    r.candidate.task_id.clone(),
                    download_tool,
                    json!({
                        "message_id": r.candidate.message_id,
                        "attachment_id": r.candidate.attachment_id,
                    }),
                )
            })
            .collect();
        let mut contents = BTreeMap::new();
        if !downloads.is_empty() {
            let result = self
                .batch(download_tool, &downloads, &self.plain_options())
                .await?;
            for (task, outcome) in downloads.iter().zip(&result.outcomes) {
                if let TaskOutcome::Success { value, .. } = outcome {
                    let content = self
                        .payload(download_tool, value)?
                        .first()
                        .and_then(|r| r.get("contentBytes"))
                        .and_then(Value::as_str)
                        .map(str::to_owned)
                        .ok_or_else(|| ExecError::Malformed {
                            tool: download_tool.to_owned(),
                            detail: format!("{} has no contentBytes", task.task_id),
                        })?;
                    contents.insert(task.task_id.clone(), content);
                }
            }
        }

        let upload_args = |r: &Route, content: Option<&String>| {
            let mut args = json!({ "folder_path": r.folder, "filename": r.document });
            if let Some(c) = content {
                args["content"] = Value::String(c.clone());
            }
            args
        };
        let first = self.state.routes[0].clone();
        let sample = contents
            .get(&first.candidate.task_id)
            .or(self.state.sample_content.as_ref());
        // A probe that wrote the first file makes its batch call a no-op;
        // that file still counts as newly uploaded.
        let mut probe_created = None;
        if sample.is_some() {
            let args = upload_args(&first, sample);
            if let Some(samples) = self.ensure_lock(upload_tool, &args, prober).await? {
                let created = self
                    .payload(upload_tool, &samples[0])?
                    .first()
                    .and_then(|r| r.get("created"))
                    .and_then(Value::as_bool)
                    .unwrap_or(false);
                if created {
                    probe_created = Some(first.candidate.task_id.clone());
                }
            }
        }

        let uploads: Vec<TaskSpec> = self
            .state
            .routes
            .iter()
            .map(|r| {
                TaskSpec::new(
                    r.candidate.task_id.clone(),
                    upload_tool,
                    upload_args(r, contents.get(&r.candidate.task_id)),
                )
            })
            .collect();
        let mut options = self.plain_options();
        options.checkpoint = checkpoint.clone();
        options.halt_after = self.params.halt_uploads_after;
        let result = self.batch(upload_tool, &uploads, &options).await?;
        let (mut created, mut unchanged) = (0, 0);
        for (task, outcome) in uploads.iter().zip(&result.outcomes) {
            if let TaskOutcome::Success { value, .. } = outcome {
                let was_created = probe_created.as_deref() == Some(task.task_id.as_str())
                    || self
                        .payload(upload_tool, value)?
                        .first()
                        .and_then(|r| r.get("created"))
                        .and_then(Value::as_bool)
                        .unwrap_or(true);
                if was_created {
                    created += 1;
                } else {
                    unchanged += 1;
                }
            }
        }
        self.state.uploaded += created;
        self.state.unchanged += unchanged;
        self.transcript.stdout(format!(
            "Uploaded {created} new file(s); {unchanged} already present; {} skipped by checkpoint.",
            result.skipped()
        ));
        Ok(())
    }
}
