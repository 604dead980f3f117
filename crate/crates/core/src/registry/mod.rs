//! Tool catalog and the discovery meta-tools.
//!
//! A planner never receives the whole catalog. It sees the list of app names,
//! issues [`Registry::search_functions`] queries, and pulls only the schemas
//! it picked into a [`LoadedContext`] via [`Registry::load_functions`]. The
//! context is metered in serialized bytes against a fixed budget.

mod refine;
pub mod tfidf;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use refine::{
    Capability, CapabilityCoverage, CoverageReport, QueryRecord, Resolution, broadened_query,
    synonyms_for,
};
use tfidf::{TermVector, cosine, idf, term_counts, tokenize, weigh};

/// Separator between the app id and the function part of a tool name.
pub const NAME_SEPARATOR: &str = "__";
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_CONTEXT_BUDGET_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Integer,
    Boolean,
    Object,
    Array,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub description: String,
}

/// A callable capability as it appears in the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub app_id: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns_hint: Option<String>,
}

impl ToolSchema {
    /// Size of the schema as it would be injected into a planner context.
    pub fn serialized_len(&self) -> usize {
        serde_json::to_vec(self).map(|v| v.len()).unwrap_or(0)
    }

    /// The part of the name after `app__`.
    pub fn function_name(&self) -> &str {
        self.name
            .split_once(NAME_SEPARATOR)
            .map(|(_, f)| f)
            .unwrap_or(&self.name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    fn search_text(&self) -> String {
        format!("{} {}", self.name, self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_id: Option<String>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}

impl SearchRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            app_id: None,
            k: DEFAULT_K,
        }
    }

    pub fn in_app(mut self, app_id: impl Into<String>) -> Self {
        self.app_id = Some(app_id.into());
        self
    }

    pub fn top(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub name: String,
    pub score: f64,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub request: SearchRequest,
    pub results: Vec<SearchResult>,
}

/// The schemas currently injected into a planner's context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedContext {
    schemas: Vec<ToolSchema>,
    schema_bytes: usize,
    budget_bytes: usize,
}

impl LoadedContext {
    pub fn with_budget(budget_bytes: usize) -> Self {
        Self {
            schemas: Vec::new(),
            schema_bytes: 0,
            budget_bytes,
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.schemas.iter().map(|s| s.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.schemas.iter().any(|s| s.name == name)
    }

    pub fn schema(&self, name: &str) -> Option<&ToolSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn schema_bytes(&self) -> usize {
        self.schema_bytes
    }

    pub fn budget_bytes(&self) -> usize {
        self.budget_bytes
    }
}

impl Default for LoadedContext {
    fn default() -> Self {
        Self::with_budget(DEFAULT_CONTEXT_BUDGET_BYTES)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate tool name `{0}`")]
    DuplicateName(String),
    #[error("tool `{0}` has an empty description")]
    EmptyDescription(String),
    #[error("tool `{name}` is not prefixed by its app id `{app_id}`")]
    NameOutsideApp { name: String, app_id: String },
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("query `{0}` has no searchable terms")]
    EmptyQuery(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("loading would use {schema_bytes} bytes of a {budget_bytes} byte context budget")]
    ContextBudgetExceeded {
        schema_bytes: usize,
        budget_bytes: usize,
    },
    #[error("{0}")]
    InvalidArgument(&'static str),
    #[error("catalog file: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone)]
struct IndexedTool {
    schema: ToolSchema,
    tokens: BTreeSet<String>,
    vector: TermVector,
}

/// Immutable, searchable catalog.
#[derive(Debug, Clone)]
pub struct Registry {
    tools: BTreeMap<String, IndexedTool>,
    doc_freq: BTreeMap<String, usize>,
    apps: BTreeSet<String>,
}

impl Registry {
    /// Builds the index. Ingestion order has no effect on any later answer.
    pub fn index_catalog(schemas: Vec<ToolSchema>) -> Result<Self, RegistryError> {
        let mut by_name = BTreeMap::new();
        for schema in schemas {
            if schema.description.trim().is_empty() {
                return Err(RegistryError::EmptyDescription(schema.name));
            }
            let prefix = format!("{}{}", schema.app_id, NAME_SEPARATOR);
            if schema.app_id.is_empty() || !schema.name.starts_with(&prefix) {
                return Err(RegistryError::NameOutsideApp {
                    name: schema.name,
                    app_id: schema.app_id,
                });
            }
            if by_name.contains_key(&schema.name) {
                return Err(RegistryError::DuplicateName(schema.name));
            }
            by_name.insert(schema.name.clone(), schema);
        }

        let token_lists: BTreeMap<String, Vec<String>> = by_name
            .iter()
            .map(|(name, s)| (name.clone(), tokenize(&s.search_text())))
            .collect();
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        for tokens in token_lists.values() {
            for t in tokens.iter().collect::<BTreeSet<_>>() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
        }
        let total = by_name.len();
        let apps = by_name.values().map(|s| s.app_id.clone()).collect();
        let tools = by_name
            .into_iter()
            .map(|(name, schema)| {
                let tokens = &token_lists[&name];
                let vector = weigh(&term_counts(tokens), |t| {
                    idf(total, doc_freq.get(t).copied().unwrap_or(0))
                });
                let indexed = IndexedTool {
                    schema,
                    tokens: tokens.iter().cloned().collect(),
                    vector,
                };
                (name, indexed)
            })
            .collect();
        Ok(Self {
            tools,
            doc_freq,
            apps,
        })
    }

    /// Reads a JSON array of [`ToolSchema`] records.
    pub fn from_catalog_file(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegistryError::Catalog(format!("{}: {e}", path.display())))?;
        let schemas: Vec<ToolSchema> = serde_json::from_str(&text)
            .map_err(|e| RegistryError::Catalog(format!("{}: {e}", path.display())))?;
        Self::index_catalog(schemas)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// App names only; no function names or schemas.
    pub fn list_apps(&self) -> Vec<String> {
        self.apps.iter().cloned().collect()
    }

    pub fn schema(&self, name: &str) -> Option<&ToolSchema> {
        self.tools.get(name).map(|t| &t.schema)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &ToolSchema> {
        self.tools.values().map(|t| &t.schema)
    }

    /// Distinct lowercase tokens of a tool's name and description.
    pub fn tokens_of(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.tools.get(name).map(|t| &t.tokens)
    }

    fn query_vector(&self, query: &str) -> TermVector {
        let total = self.tools.len();
        weigh(&term_counts(&tokenize(query)), |t| {
            idf(total, self.doc_freq.get(t).copied().unwrap_or(0))
        })
    }

    /// Ranking score of a single catalog entry for `query`.
    pub fn score(&self, query: &str, name: &str) -> Option<f64> {
        let q = self.query_vector(query);
        self.tools.get(name).map(|t| cosine(&q, &t.vector))
    }

    fn validate(&self, request: &SearchRequest) -> Result<(), RegistryError> {
        if request.k == 0 {
            return Err(RegistryError::InvalidK);
        }
        if tokenize(&request.query).is_empty() {
            return Err(RegistryError::EmptyQuery(request.query.clone()));
        }
        if let Some(app) = &request.app_id
            && !self.apps.contains(app)
        {
            return Err(RegistryError::UnknownApp(app.clone()));
        }
        Ok(())
    }

    fn search_one(&self, request: &SearchRequest) -> Vec<SearchResult> {
        let q = self.query_vector(&request.query);
        let mut scored: Vec<SearchResult> = self
            .tools
            .values()
            .filter(|t| {
                request
                    .app_id
                    .as_ref()
                    .is_none_or(|app| &t.schema.app_id == app)
            })
            .map(|t| SearchResult {
                name: t.schema.name.clone(),
                score: cosine(&q, &t.vector),
                snippet: t.schema.description.clone(),
            })
            .filter(|r| r.score > 0.0)
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.name.cmp(&b.name))
        });
        scored.truncate(request.k);
        scored
    }

    /// Answers each request independently. Results carry names and snippets;
    /// full schemas only arrive through [`Registry::load_functions`].
    pub fn search_functions(
        &self,
        requests: &[SearchRequest],
    ) -> Result<Vec<SearchResponse>, RegistryError> {
        requests.iter().try_for_each(|r| self.validate(r))?;
        Ok(requests
            .iter()
            .map(|r| SearchResponse {
                request: r.clone(),
                results: self.search_one(r),
            })
            .collect())
    }

    /// Adds `names` to a copy of `ctx`. Already-loaded names are skipped; the
    /// call is all-or-nothing with respect to the byte budget.
    pub fn load_functions<S: AsRef<str>>(
        &self,
        ctx: &LoadedContext,
        names: &[S],
    ) -> Result<LoadedContext, RegistryError> {
        let mut next = ctx.clone();
        for name in names {
            let name = name.as_ref();
            let schema = self
                .schema(name)
                .ok_or_else(|| RegistryError::UnknownFunction(name.to_owned()))?;
            if next.contains(name) {
                continue;
            }
            next.schema_bytes += schema.serialized_len();
            next.schemas.push(schema.clone());
        }
        if next.schema_bytes > next.budget_bytes {
            return Err(RegistryError::ContextBudgetExceeded {
                schema_bytes: next.schema_bytes,
                budget_bytes: next.budget_bytes,
            });
        }
        Ok(next)
    }
}
