use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::ErrorClass;

/// Fails every `every_nth` call to tools matching `tool_pattern`.
///
/// Patterns are an exact tool name, `*`, or a prefix ending in `*`
/// (`outlook__*`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRule {
    pub tool_pattern: String,
    pub every_nth: u64,
    pub error: ErrorClass,
}

impl FaultRule {
    pub fn new(tool_pattern: impl Into<String>, every_nth: u64, error: ErrorClass) -> Self {
        assert!(every_nth >= 1, "every_nth must be positive");
        Self {
            tool_pattern: tool_pattern.into(),
            every_nth,
            error,
        }
    }

    pub fn matches(&self, tool: &str) -> bool {
        match self.tool_pattern.strip_suffix('*') {
            Some(prefix) => tool.starts_with(prefix),
            None => self.tool_pattern == tool,
        }
    }
}

/// Deterministic fault injection keyed on per-tool call counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSchedule {
    pub rules: Vec<FaultRule>,
    #[serde(default)]
    counters: BTreeMap<String, u64>,
}

impl FaultSchedule {
    pub fn new(rules: Vec<FaultRule>) -> Self {
        Self {
            rules,
            counters: BTreeMap::new(),
        }
    }

    /// Records one call to `tool` and returns the fault to raise, if any.
    /// The first matching rule wins.
    pub fn on_call(&mut self, tool: &str) -> Option<ErrorClass> {
        let n = self.counters.entry(tool.to_owned()).or_insert(0);
        *n += 1;
        let n = *n;
        self.rules
            .iter()
            .find(|r| r.matches(tool) && n.is_multiple_of(r.every_nth))
            .map(|r| r.error)
    }

    pub fn calls(&self, tool: &str) -> u64 {
        self.counters.get(tool).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fifth_call_fires() {
        let mut s = FaultSchedule::new(vec![FaultRule::new(
            "outlook__*",
            5,
            ErrorClass::RateLimited,
        )]);
        let fired: Vec<u64> = (1..=12)
            .filter(|_| s.on_call("outlook__download_attachment").is_some())
            .collect();
        assert_eq!(fired.len(), 2);
        assert_eq!(s.on_call("onedrive__upload_file"), None);
        assert_eq!(s.calls("outlook__download_attachment"), 12);
    }

    #[test]
    fn identical_sequences_fire_identically() {
        let rules = vec![
            FaultRule::new("a", 3, ErrorClass::RateLimited),
            FaultRule::new("*", 4, ErrorClass::TransientUnavailable),
        ];
        let seq = ["a", "b", "a", "a", "b", "b", "a", "b", "a", "a"];
        let run = |rules: Vec<FaultRule>| {
            let mut s = FaultSchedule::new(rules);
            seq.iter().map(|t| s.on_call(t)).collect::<Vec<_>>()
        };
        assert_eq!(run(rules.clone()), run(rules));
    }
}
