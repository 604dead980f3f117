//! Probe calls, shape inference and schema locks.
//!
//! [`probe_call`] issues one tightly paginated call and captures the raw
//! response together with the lines a script would have printed while
//! looking at it. [`LockTable::lock_schema`] turns a grounded report into a
//! [`LockedSchema`]; everything downstream validates against that lock
//! instead of trusting a guessed response structure.

mod shape;

use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::env::{Environment, ToolError};
use crate::registry::{LoadedContext, ToolSchema};

pub use shape::{
    ENVELOPE_FIELDS, Field, Kind, Node, PathSegment, ShapeDescriptor, ShapeError, Validation,
    detect_envelope, display_path, infer_shape, merge_shapes, payload_of,
};

pub const MAX_PROBE_LIMIT: u32 = 5;

/// Parameter names treated as the page-size knob of a tool.
pub const PAGINATION_PARAMS: &[&str] = &["top", "limit", "page_size", "max_results"];

/// Count reported by OData-style envelopes for the full result set.
const COUNT_FIELD: &str = "@odata.count";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeVerdict {
    Grounded,
    SuspectEmpty,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub tool_name: String,
    /// Arguments actually sent, after the page size was clamped.
    pub args: Value,
    pub limit: u32,
    pub raw_samples: Vec<Value>,
    pub stdout_lines: Vec<String>,
    pub verdict: ProbeVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ToolError>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProbeError {
    #[error("tool `{0}` is not loaded in the active context")]
    ToolNotLoaded(String),
    #[error("probe limit {limit} outside 1..={max}; bulk calls must wait for a schema lock")]
    LimitExceeded { limit: u32, max: u32 },
}

/// Noun phrase describing what a tool returns, for the `Fetched <n> <unit>.`
/// line. `list_emails` with `has_attachments: true` reads as
/// "emails with attachments".
pub fn record_unit(schema: &ToolSchema, args: &Value) -> String {
    const VERBS: &[&str] = &["list_", "get_", "search_", "fetch_", "download_", "read_"];
    let function = schema.function_name();
    let noun = VERBS
        .iter()
        .find_map(|v| function.strip_prefix(v))
        .unwrap_or(function)
        .replace('_', " ");
    let mut qualifiers = Vec::new();
    collect_has_flags(args, &mut qualifiers);
    qualifiers.sort();
    qualifiers.dedup();
    let mut unit = noun;
    for q in qualifiers {
        unit.push_str(" with ");
        unit.push_str(&q);
    }
    unit
}

fn collect_has_flags(args: &Value, out: &mut Vec<String>) {
    if let Value::Object(map) = args {
        for (k, v) in map {
            match v {
                Value::Bool(true) => {
                    if let Some(rest) = k.strip_prefix("has_") {
                        out.push(rest.replace('_', " "));
                    }
                }
                Value::Object(_) => collect_has_flags(v, out),
                _ => {}
            }
        }
    }
}

fn clamp_page_size(schema: &ToolSchema, args: &Value, limit: u32) -> Value {
    let mut map = match args {
        Value::Object(m) => m.clone(),
        Value::Null => Map::new(),
        other => return other.clone(),
    };
    for name in PAGINATION_PARAMS {
        if schema.param(name).is_some() {
            let requested = map.get(*name).and_then(Value::as_u64);
            let forced = requested.map_or(limit as u64, |r| r.min(limit as u64));
            map.insert((*name).to_owned(), Value::from(forced));
        }
    }
    Value::Object(map)
}

/// Probes one tool with at most `limit` records.
pub async fn probe_call<E: Environment>(
    env: &E,
    ctx: &LoadedContext,
    tool_name: &str,
    args: &Value,
    limit: u32,
) -> Result<ProbeReport, ProbeError> {
    let schema = ctx
        .schema(tool_name)
        .ok_or_else(|| ProbeError::ToolNotLoaded(tool_name.to_owned()))?;
    if limit == 0 || limit > MAX_PROBE_LIMIT {
        return Err(ProbeError::LimitExceeded {
            limit,
            max: MAX_PROBE_LIMIT,
        });
    }
    let sent = clamp_page_size(schema, args, limit);
    let unit = record_unit(schema, &sent);
    let mut report = ProbeReport {
        tool_name: tool_name.to_owned(),
        args: sent.clone(),
        limit,
        raw_samples: Vec::new(),
        stdout_lines: Vec::new(),
        verdict: ProbeVerdict::Failed,
        error: None,
    };
    match env.call(tool_name, &sent).await {
        Err(e) => {
            report
                .stdout_lines
                .push(format!("Probe of {tool_name} failed: {e}"));
            report.error = Some(e);
        }
        Ok(response) => {
            let payload_len = payload_of(&response).map(Vec::len);
            let total = response
                .get(COUNT_FIELD)
                .and_then(Value::as_u64)
                .map(|n| n as usize)
                .or(payload_len)
                .unwrap_or(1);
            report.stdout_lines.push(format!("Fetched {total} {unit}."));
            if let Some(n) = payload_len {
                report
                    .stdout_lines
                    .push(format!("Sample contains {n} record(s) (limit {limit})."));
            }
            report
                .stdout_lines
                .push(format!("Raw response: {response}"));
            report.verdict = if payload_len == Some(0) {
                ProbeVerdict::SuspectEmpty
            } else {
                ProbeVerdict::Grounded
            };
            report.raw_samples.push(response);
        }
    }
    Ok(report)
}

/// A frozen response structure for one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockedSchema {
    pub tool_name: String,
    pub shape: ShapeDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_path: Option<Vec<String>>,
    pub sample_count: u64,
    pub probe_args_digest: String,
}

impl LockedSchema {
    /// Digest of the structural content (shape + envelope), independent of
    /// how many samples were seen.
    pub fn digest(&self) -> String {
        let doc = serde_json::json!({ "shape": self.shape.structure(), "envelope_path": self.envelope_path });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    pub fn validate(&self, value: &Value) -> Validation {
        validate_against(self, value)
    }

    /// The payload array under `envelope_path`, or the root when it is an
    /// array and no envelope is recorded.
    pub fn extract_payload<'a>(&self, value: &'a Value) -> Option<&'a Vec<Value>> {
        match &self.envelope_path {
            Some(path) => path.iter().try_fold(value, |v, k| v.get(k))?.as_array(),
            None => value.as_array(),
        }
    }
}

pub fn args_digest(args: &Value) -> String {
    hex::encode(Sha256::digest(args.to_string().as_bytes()))
}

pub fn validate_against(lock: &LockedSchema, value: &Value) -> Validation {
    lock.shape.validate(value)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LockError {
    #[error("refusing to lock a {0:?} probe")]
    NotGrounded(ProbeVerdict),
    #[error("report is for `{report}`, not `{requested}`")]
    ToolMismatch { requested: String, report: String },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("lock table document: {0}")]
    Document(String),
}

/// Locks keyed by tool name. Concurrent readers, exclusive writers; locking
/// an already-locked tool merges the new observation in.
#[derive(Debug, Default)]
pub struct LockTable {
    locks: RwLock<BTreeMap<String, LockedSchema>>,
}

impl LockTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lock_schema(
        &self,
        tool_name: &str,
        report: &ProbeReport,
    ) -> Result<LockedSchema, LockError> {
        if report.tool_name != tool_name {
            return Err(LockError::ToolMismatch {
                requested: tool_name.to_owned(),
                report: report.tool_name.clone(),
            });
        }
        if report.verdict != ProbeVerdict::Grounded {
            return Err(LockError::NotGrounded(report.verdict));
        }
        let observed = infer_shape(&report.raw_samples)?;
        let mut locks = self.locks.write().expect("lock table poisoned");
        let (shape, sample_count) = match locks.get(tool_name) {
            Some(prev) => (
                merge_shapes(&prev.shape, &observed)?,
                prev.sample_count + report.raw_samples.len() as u64,
            ),
            None => (observed, report.raw_samples.len() as u64),
        };
        let lock = LockedSchema {
            tool_name: tool_name.to_owned(),
            envelope_path: detect_envelope(&shape),
            shape,
            sample_count,
            probe_args_digest: args_digest(&report.args),
        };
        locks.insert(tool_name.to_owned(), lock.clone());
        Ok(lock)
    }

    pub fn insert(&self, lock: LockedSchema) {
        self.locks
            .write()
            .expect("lock table poisoned")
            .insert(lock.tool_name.clone(), lock);
    }

    pub fn get(&self, tool_name: &str) -> Option<LockedSchema> {
        self.locks
            .read()
            .expect("lock table poisoned")
            .get(tool_name)
            .cloned()
    }

    pub fn contains(&self, tool_name: &str) -> bool {
        self.locks
            .read()
            .expect("lock table poisoned")
            .contains_key(tool_name)
    }

    pub fn all(&self) -> Vec<LockedSchema> {
        self.locks
            .read()
            .expect("lock table poisoned")
            .values()
            .cloned()
            .collect()
    }

    pub fn export(&self) -> String {
        serde_json::to_string_pretty(&self.all()).expect("locks serialize")
    }

    pub fn import(document: &str) -> Result<Self, LockError> {
        let locks: Vec<LockedSchema> =
            serde_json::from_str(document).map_err(|e| LockError::Document(e.to_string()))?;
        let table = Self::new();
        for lock in locks {
            table.insert(lock);
        }
        Ok(table)
    }
}

impl From<Vec<LockedSchema>> for LockTable {
    fn from(locks: Vec<LockedSchema>) -> Self {
        let table = Self::new();
        locks.into_iter().for_each(|l| table.insert(l));
        table
    }
}
