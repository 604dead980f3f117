//! Search, evaluate, refine.
//!
//! Each round issues one batched search for every still-unresolved
//! capability. A result covers a capability when, for every term of the
//! capability, the tool's name or description contains that term or one of
//! the synonyms admitted so far. Round 1 admits no synonyms; every later round
//! admits the next two synonyms of each term from a fixed table and queries
//! with the substituted phrasings.

use serde::{Deserialize, Serialize};

use super::tfidf::tokenize;
use super::{Registry, RegistryError, SearchRequest};

/// Synonyms per round after the first.
const SYNONYMS_PER_ROUND: usize = 2;

const SYNONYMS: &[(&str, &[&str])] = &[
    ("add", &["create", "insert"]),
    ("attachment", &["file", "document"]),
    ("attachments", &["files", "documents"]),
    ("create", &["make", "add", "new"]),
    ("delete", &["remove", "trash"]),
    ("directory", &["folder"]),
    ("document", &["file", "item"]),
    ("download", &["get", "fetch", "read"]),
    ("email", &["message", "mail"]),
    ("emails", &["messages"]),
    ("fetch", &["list", "get", "retrieve", "read"]),
    ("file", &["item", "document"]),
    ("files", &["items", "documents"]),
    ("folder", &["directory", "container"]),
    ("get", &["fetch", "retrieve"]),
    ("items", &["files", "children"]),
    ("list", &["enumerate", "get"]),
    ("mail", &["messages", "emails"]),
    ("message", &["email", "mail"]),
    ("messages", &["emails", "mail"]),
    ("send", &["post", "deliver"]),
    ("share", &["invite", "permission"]),
    ("upload", &["put", "store", "save"]),
];

pub fn synonyms_for(term: &str) -> &'static [&'static str] {
    SYNONYMS
        .binary_search_by(|(t, _)| t.cmp(&term))
        .map(|i| SYNONYMS[i].1)
        .unwrap_or(&[])
}

/// Query text for `round` (1-based). Round 1 is the need itself. Round r
/// joins the phrasings obtained by substituting each term with its synonym
/// at positions `2(r-2)` and `2(r-2)+1`; when the table has nothing new for
/// that round the previous round's query is reused.
pub fn broadened_query(need: &str, round: u32) -> String {
    let terms = tokenize(need);
    if round <= 1 {
        return need.to_owned();
    }
    let tier_start = (round as usize - 2) * SYNONYMS_PER_ROUND;
    let mut variants: Vec<String> = Vec::new();
    for idx in tier_start..tier_start + SYNONYMS_PER_ROUND {
        let mut changed = false;
        let variant: Vec<&str> = terms
            .iter()
            .map(|t| match synonyms_for(t).get(idx) {
                Some(s) => {
                    changed = true;
                    *s
                }
                None => t.as_str(),
            })
            .collect();
        let variant = variant.join(" ");
        if changed && !variants.contains(&variant) {
            variants.push(variant);
        }
    }
    if variants.is_empty() {
        broadened_query(need, round - 1)
    } else {
        variants.join(" ")
    }
}

/// Terms (original plus admitted synonyms) that satisfy each need term in
/// `round`.
fn admitted_terms(need: &str, round: u32) -> Vec<Vec<String>> {
    let admitted = (round.saturating_sub(1) as usize) * SYNONYMS_PER_ROUND;
    tokenize(need)
        .into_iter()
        .map(|t| {
            let mut alts = vec![t.clone()];
            alts.extend(
                synonyms_for(&t)
                    .iter()
                    .take(admitted)
                    .map(|s| (*s).to_owned()),
            );
            alts
        })
        .collect()
}

/// A goal capability, optionally scoped to one app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capability {
    pub need: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_id: Option<String>,
}

impl Capability {
    pub fn new(need: impl Into<String>) -> Self {
        Self {
            need: need.into(),
            app_id: None,
        }
    }

    pub fn in_app(mut self, app_id: impl Into<String>) -> Self {
        self.app_id = Some(app_id.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Resolution {
    Resolved {
        tool: String,
        query: String,
        round: u32,
        score: f64,
    },
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityCoverage {
    pub capability: Capability,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub need: String,
    pub round: u32,
    pub query: String,
}

/// Outcome of the refinement loop plus the audit trail of every query issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: Vec<CapabilityCoverage>,
    pub queries: Vec<QueryRecord>,
    pub rounds: u32,
}

impl CoverageReport {
    pub fn resolved_tools(&self) -> Vec<String> {
        let mut tools: Vec<String> = Vec::new();
        for c in &self.coverage {
            if let Resolution::Resolved { tool, .. } = &c.resolution
                && !tools.contains(tool)
            {
                tools.push(tool.clone());
            }
        }
        tools
    }

    pub fn unresolved(&self) -> impl Iterator<Item = &Capability> {
        self.coverage
            .iter()
            .filter(|c| c.resolution == Resolution::Unresolved)
            .map(|c| &c.capability)
    }

    pub fn resolution_of(&self, need: &str) -> Option<&Resolution> {
        self.coverage
            .iter()
            .find(|c| c.capability.need == need)
            .map(|c| &c.resolution)
    }
}

impl Registry {
    /// Runs up to `budget` rounds of search/evaluate/refine, returning top-`k`
    /// searches per round.
    pub fn refine_search(
        &self,
        capabilities: &[Capability],
        budget: u32,
        k: usize,
    ) -> Result<CoverageReport, RegistryError> {
        if capabilities.is_empty() {
            return Err(RegistryError::InvalidArgument(
                "at least one capability is required",
            ));
        }
        if budget == 0 {
            return Err(RegistryError::InvalidArgument(
                "refine budget must be at least 1",
            ));
        }
        let mut resolutions = vec![Resolution::Unresolved; capabilities.len()];
        let mut queries = Vec::new();
        let mut rounds = 0;

        for round in 1..=budget {
            let pending: Vec<usize> = (0..capabilities.len())
                .filter(|&i| resolutions[i] == Resolution::Unresolved)
                .collect();
            if pending.is_empty() {
                break;
            }
            rounds = round;
            let requests: Vec<SearchRequest> = pending
                .iter()
                .map(|&i| {
                    let cap = &capabilities[i];
                    SearchRequest {
                        query: broadened_query(&cap.need, round),
                        app_id: cap.app_id.clone(),
                        k,
                    }
                })
                .collect();
            let responses = self.search_functions(&requests)?;
            for (&i, response) in pending.iter().zip(responses) {
                let need = &capabilities[i].need;
                queries.push(QueryRecord {
                    need: need.clone(),
                    round,
                    query: response.request.query.clone(),
                });
                let admitted = admitted_terms(need, round);
                let hit = response.results.iter().find(|r| {
                    self.tokens_of(&r.name).is_some_and(|tokens| {
                        admitted
                            .iter()
                            .all(|alts| alts.iter().any(|a| tokens.contains(a)))
                    })
                });
                if let Some(hit) = hit {
                    resolutions[i] = Resolution::Resolved {
                        tool: hit.name.clone(),
                        query: response.request.query.clone(),
                        round,
                        score: hit.score,
                    };
                }
            }
        }

        Ok(CoverageReport {
            coverage: capabilities
                .iter()
                .cloned()
                .zip(resolutions)
                .map(|(capability, resolution)| CapabilityCoverage {
                    capability,
                    resolution,
                })
                .collect(),
            queries,
            rounds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synonym_table_is_sorted_for_lookup() {
        assert!(SYNONYMS.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(synonyms_for("emails"), &["messages"]);
        assert!(synonyms_for("teleport").is_empty());
    }

    #[test]
    fn broadening_fetch_emails() {
        assert_eq!(broadened_query("fetch emails", 1), "fetch emails");
        assert_eq!(
            broadened_query("fetch emails", 2),
            "list messages get emails"
        );
        assert_eq!(
            broadened_query("fetch emails", 3),
            "retrieve emails read emails"
        );
        // Nothing left in the table: falls back to the last broadened form.
        assert_eq!(
            broadened_query("fetch emails", 4),
            "retrieve emails read emails"
        );
    }

    #[test]
    fn admitted_terms_grow_per_round() {
        assert_eq!(
            admitted_terms("fetch emails", 1),
            vec![vec!["fetch"], vec!["emails"]]
        );
        assert_eq!(
            admitted_terms("fetch emails", 2),
            vec![vec!["fetch", "list", "get"], vec!["emails", "messages"]]
        );
    }
}
