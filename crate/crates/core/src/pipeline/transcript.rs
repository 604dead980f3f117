use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::registry::SearchRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLine {
    pub task_id: String,
    pub outcome: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Goal {
        text: String,
    },
    AppsListed {
        apps: Vec<String>,
    },
    Search {
        request: SearchRequest,
        results: Vec<SearchHit>,
    },
    Refine {
        need: String,
        round: u32,
        query: String,
    },
    Resolved {
        need: String,
        tool: Option<String>,
        round: Option<u32>,
    },
    Load {
        tools: Vec<String>,
        schema_bytes: usize,
    },
    Anchor {
        revision: u64,
        render: String,
    },
    ContextFlush {
        current_step: Option<String>,
    },
    MemoryProposal {
        prompt: String,
        accepted: bool,
    },
    StepStarted {
        item: String,
        action: String,
    },
    Probe {
        tool: String,
        args: Value,
        limit: u32,
        verdict: String,
        stdout: Vec<String>,
    },
    ProbeReview {
        tool: String,
        proceed: bool,
        reason: Option<String>,
    },
    Lock {
        tool: String,
        digest: String,
    },
    Stdout {
        line: String,
    },
    Folder {
        path: String,
        existed: bool,
    },
    Batch {
        tool: String,
        tasks: Vec<TaskLine>,
    },
    Replay {
        format_version: u32,
        goal: String,
    },
    Halted {
        phase: String,
        reason: String,
    },
    Done,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Goal { .. } => "goal",
            Event::AppsListed { .. } => "apps_listed",
            Event::Search { .. } => "search",
            Event::Refine { .. } => "refine",
            Event::Resolved { .. } => "resolved",
            Event::Load { .. } => "load",
            Event::Anchor { .. } => "anchor",
            Event::ContextFlush { .. } => "context_flush",
            Event::MemoryProposal { .. } => "memory_proposal",
            Event::StepStarted { .. } => "step_started",
            Event::Probe { .. } => "probe",
            Event::ProbeReview { .. } => "probe_review",
            Event::Lock { .. } => "lock",
            Event::Stdout { .. } => "stdout",
            Event::Folder { .. } => "folder",
            Event::Batch { .. } => "batch",
            Event::Replay { .. } => "replay",
            Event::Halted { .. } => "halted",
            Event::Done => "done",
        }
    }
}

/// Ordered record of everything a run did, written as JSON lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<Event>,
}

impl Transcript {
    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn stdout(&mut self, line: impl Into<String>) {
        self.push(Event::Stdout { line: line.into() });
    }

    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { events })
    }

    /// Every printed line, from probes and steps alike, in order.
    pub fn stdout_lines(&self) -> Vec<&str> {
        let mut lines = Vec::new();
        for e in &self.events {
            match e {
                Event::Stdout { line } => lines.push(line.as_str()),
                Event::Probe { stdout, .. } => lines.extend(stdout.iter().map(String::as_str)),
                _ => {}
            }
        }
        lines
    }

    pub fn contains_line(&self, line: &str) -> bool {
        self.stdout_lines().contains(&line)
    }

    pub fn count(&self, name: &str) -> usize {
        self.events.iter().filter(|e| e.name() == name).count()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e.name() == name)
    }
}
