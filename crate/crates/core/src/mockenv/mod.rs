//! In-process simulation of a mailbox service and a drive service.
//!
//! Responses use an OData-style envelope (`@odata.context` plus a `value`
//! array). Calls are counted per tool, can be delayed by a fixed simulated
//! latency, and can be made to fail on a deterministic schedule. The world
//! itself is plain data: snapshot it, compare it, save it as a fixture.

mod catalog;
mod faults;
mod fixture;
mod world;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::Value;

use crate::env::{Environment, ToolError};

pub use catalog::{fixture_catalog, synthetic_catalog};
pub use faults::{FaultRule, FaultSchedule};
pub use fixture::{INTERNAL_DOMAIN, WINDOW_DAYS, build_fixture, bulk_fixture, fixture_now};
pub use world::{
    Attachment, DriveNode, MailMessage, NodeKind, ResponseStyle, WorldState, join_path,
};

/// The checked-in fixture documents as `(file name, contents)`: the 12-tool
/// catalog, the 200-tool synthetic catalog and the seed-0 world.
pub fn fixture_documents() -> Vec<(&'static str, String)> {
    fn pretty<T: serde::Serialize>(v: &T) -> String {
        serde_json::to_string_pretty(v).expect("fixture serializes") + "\n"
    }
    vec![
        ("catalog.json", pretty(&fixture_catalog())),
        ("catalog_synthetic.json", pretty(&synthetic_catalog())),
        ("seed0.json", pretty(&build_fixture(0))),
    ]
}

/// Instrumentation collected across calls.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallStats {
    pub calls: BTreeMap<String, u64>,
    /// Calls that changed the world.
    pub mutations: u64,
    /// Number of times each file path was written with new content.
    pub file_writes: BTreeMap<String, u64>,
    /// Highest number of simultaneously executing calls observed.
    pub max_in_flight: usize,
}

impl CallStats {
    pub fn calls_to(&self, tool: &str) -> u64 {
        self.calls.get(tool).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> u64 {
        self.calls.values().sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture {path}: {message}")]
    Load { path: String, message: String },
}

pub struct MockEnv {
    world: Mutex<WorldState>,
    faults: Mutex<FaultSchedule>,
    stats: Mutex<CallStats>,
    in_flight: AtomicUsize,
    latency: Duration,
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl MockEnv {
    pub fn new(world: WorldState) -> Self {
        Self {
            world: Mutex::new(world),
            faults: Mutex::new(FaultSchedule::default()),
            stats: Mutex::new(CallStats::default()),
            in_flight: AtomicUsize::new(0),
            latency: Duration::ZERO,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(build_fixture(seed))
    }

    pub fn from_fixture_file(path: &Path) -> Result<Self, FixtureError> {
        let err = |message: String| FixtureError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let world: WorldState = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        world.check_invariants().map_err(err)?;
        Ok(Self::new(world))
    }

    /// Simulated per-call latency, spent on the tokio clock.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_faults(self, rules: Vec<FaultRule>) -> Self {
        *self.faults.lock().unwrap() = FaultSchedule::new(rules);
        self
    }

    pub fn set_faults(&self, rules: Vec<FaultRule>) {
        *self.faults.lock().unwrap() = FaultSchedule::new(rules);
    }

    pub fn snapshot(&self) -> WorldState {
        self.world.lock().unwrap().clone()
    }

    pub fn stats(&self) -> CallStats {
        self.stats.lock().unwrap().clone()
    }

    pub fn reset_stats(&self) {
        *self.stats.lock().unwrap() = CallStats::default();
    }

    pub fn advance_clock(&self, by: chrono::Duration) {
        self.world.lock().unwrap().now += by;
    }

    pub fn now(&self) -> chrono::DateTime<chrono::Utc> {
        self.world.lock().unwrap().now
    }

    pub fn set_response_style(&self, style: ResponseStyle) {
        self.world.lock().unwrap().response_style = style;
    }
}

impl Environment for MockEnv {
    async fn call(&self, tool: &str, args: &Value) -> Result<Value, ToolError> {
        let now_in_flight = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(&self.in_flight);
        {
            let mut stats = self.stats.lock().unwrap();
            *stats.calls.entry(tool.to_owned()).or_default() += 1;
            stats.max_in_flight = stats.max_in_flight.max(now_in_flight);
        }
        let fault = self.faults.lock().unwrap().on_call(tool);
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        if let Some(class) = fault {
            return Err(ToolError::new(class, format!("injected fault on `{tool}`")));
        }
        let result = self.world.lock().unwrap().dispatch(tool, args);
        let (body, effect) = result?;
        if effect.mutated {
            let mut stats = self.stats.lock().unwrap();
            stats.mutations += 1;
            if let Some(path) = effect.written_file {
                *stats.file_writes.entry(path).or_default() += 1;
            }
        }
        Ok(body)
    }
}
