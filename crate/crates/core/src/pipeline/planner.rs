use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::naming::{CompanyRule, DEFAULT_FOLDER_TEMPLATE, NamingRule};
use crate::anchor::{TodoItem, TodoStatus};
use crate::mockenv::{INTERNAL_DOMAIN, WINDOW_DAYS};
use crate::probe::{LockedSchema, ProbeReport, ProbeVerdict};
use crate::registry::{Capability, CoverageReport, Resolution};

/// One executable unit of a plan item. Every parameter is explicit so a
/// frozen skill runs without consulting any defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepAction {
    FetchFilter {
        list_tool: String,
        window_days: i64,
        extensions: Vec<String>,
        internal_domains: Vec<String>,
        page_size: u32,
    },
    ExtractRoute {
        download_tool: String,
        company_rule: CompanyRule,
        naming_rule: NamingRule,
        folder_template: String,
    },
    EnsureFolders {
        folder_template: String,
    },
    UploadBatch {
        download_tool: String,
        upload_tool: String,
    },
}

impl StepAction {
    pub fn kind(&self) -> &'static str {
        match self {
            StepAction::FetchFilter { .. } => "fetch_filter",
            StepAction::ExtractRoute { .. } => "extract_route",
            StepAction::EnsureFolders { .. } => "ensure_folders",
            StepAction::UploadBatch { .. } => "upload_batch",
        }
    }

    /// Rejects values no run could execute.
    pub fn check(&self) -> Result<(), String> {
        let nonempty = |field: &str, value: &str| {
            if value.trim().is_empty() {
                Err(format!("{}: `{field}` is empty", self.kind()))
            } else {
                Ok(())
            }
        };
        match self {
            StepAction::FetchFilter {
                list_tool,
                window_days,
                extensions,
                internal_domains,
                page_size,
            } => {
                nonempty("list_tool", list_tool)?;
                if *window_days < 1 {
                    return Err("fetch_filter: window_days must be at least 1".into());
                }
                if extensions.is_empty() || extensions.iter().any(|e| e.trim().is_empty()) {
                    return Err("fetch_filter: extension allowlist is empty".into());
                }
                if internal_domains.iter().any(|d| d.trim().is_empty()) {
                    return Err("fetch_filter: blank internal domain".into());
                }
                if *page_size == 0 {
                    return Err("fetch_filter: page_size must be at least 1".into());
                }
                Ok(())
            }
            StepAction::ExtractRoute {
                download_tool,
                folder_template,
                ..
            } => {
                nonempty("download_tool", download_tool)?;
                template_ok(folder_template)
            }
            StepAction::EnsureFolders { folder_template } => template_ok(folder_template),
            StepAction::UploadBatch {
                download_tool,
                upload_tool,
            } => {
                nonempty("download_tool", download_tool)?;
                nonempty("upload_tool", upload_tool)
            }
        }
    }
}

fn template_ok(template: &str) -> Result<(), String> {
    if template.contains("{company}") {
        Ok(())
    } else {
        Err(format!("folder template `{template}` lacks {{company}}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ProbeDecision {
    Proceed,
    Revise { reason: String },
}

/// The decisions a planner makes. The pipeline only ever shows a planner the
/// current anchor render and the output of the phase it just ran.
pub trait Planner {
    fn propose_capability_queries(&mut self, goal: &str, apps: &[String]) -> Vec<Capability>;

    fn choose_tools(&mut self, coverage: &CoverageReport) -> Vec<String>;

    fn propose_plan(&mut self, tools: &[String]) -> Vec<TodoItem>;

    fn derive_step_action(
        &mut self,
        current: &TodoItem,
        locks: &[LockedSchema],
        anchor: &str,
    ) -> Result<Vec<StepAction>, String>;

    fn review_probe(&mut self, report: &ProbeReport) -> ProbeDecision;
}

pub const PLAN_LOAD: &str = "Load functions for Outlook and OneDrive";
pub const PLAN_FETCH: &str = "Fetch Outlook emails (past 15 days) and filter for (.pdf, .xlsx)";
pub const PLAN_SAMPLE: &str =
    "Process sample: Download, extract Company Name, determine Document Name";
pub const PLAN_UPLOAD: &str =
    "Create 'Email Attachments December/{Company Name}' folders and upload";

const NEED_LIST: &str = "fetch emails";
const NEED_DOWNLOAD: &str = "download attachment";
const NEED_UPLOAD: &str = "upload file";

/// Per-app capability needs, in the order they are searched.
const NEEDS: &[(&str, &[&str])] = &[
    ("outlook", &[NEED_LIST, NEED_DOWNLOAD]),
    ("onedrive", &["create folder", NEED_UPLOAD, "list items"]),
];

/// Deterministic planner for the attachment-archival goal.
///
/// Capabilities, plan items and step parameters come from fixed tables.
/// Tool names are whatever discovery resolved for each need.
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    pub page_size: u32,
    pub internal_domains: Vec<String>,
    pub extensions: Vec<String>,
    pub window_days: i64,
    pub folder_template: String,
    resolved: BTreeMap<String, String>,
}

impl Default for ScriptedPlanner {
    fn default() -> Self {
        Self {
            page_size: 50,
            internal_domains: vec![INTERNAL_DOMAIN.to_owned()],
            extensions: vec!["pdf".into(), "xlsx".into()],
            window_days: WINDOW_DAYS,
            folder_template: DEFAULT_FOLDER_TEMPLATE.to_owned(),
            resolved: BTreeMap::new(),
        }
    }
}

impl ScriptedPlanner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds blocklisted sender domains on top of the default.
    pub fn with_internal_domains(mut self, extra: impl IntoIterator<Item = String>) -> Self {
        for d in extra {
            if !self.internal_domains.contains(&d) {
                self.internal_domains.push(d);
            }
        }
        self
    }

    /// The per-app search strings a single search request would use.
    pub fn app_queries() -> Vec<(String, String)> {
        NEEDS
            .iter()
            .map(|(app, needs)| ((*app).to_owned(), needs.join(" ")))
            .collect()
    }

    fn tool_for(&self, need: &str) -> Result<String, String> {
        self.resolved
            .get(need)
            .cloned()
            .ok_or_else(|| format!("no tool was resolved for `{need}`"))
    }
}

impl Planner for ScriptedPlanner {
    fn propose_capability_queries(&mut self, _goal: &str, apps: &[String]) -> Vec<Capability> {
        NEEDS
            .iter()
            .filter(|(app, _)| apps.iter().any(|a| a == app))
            .flat_map(|(app, needs)| needs.iter().map(move |n| Capability::new(*n).in_app(*app)))
            .collect()
    }

    fn choose_tools(&mut self, coverage: &CoverageReport) -> Vec<String> {
        self.resolved.clear();
        for c in &coverage.coverage {
            if let Resolution::Resolved { tool, .. } = &c.resolution {
                self.resolved
                    .insert(c.capability.need.clone(), tool.clone());
            }
        }
        coverage.resolved_tools()
    }

    fn propose_plan(&mut self, _tools: &[String]) -> Vec<TodoItem> {
        vec![
            TodoItem::new(PLAN_LOAD, TodoStatus::InProgress),
            TodoItem::pending(PLAN_FETCH),
            TodoItem::pending(PLAN_SAMPLE),
            TodoItem::pending(PLAN_UPLOAD),
        ]
    }

    fn derive_step_action(
        &mut self,
        current: &TodoItem,
        _locks: &[LockedSchema],
        _anchor: &str,
    ) -> Result<Vec<StepAction>, String> {
        match current.content.as_str() {
            PLAN_LOAD => Ok(vec![]),
            PLAN_FETCH => Ok(vec![StepAction::FetchFilter {
                list_tool: self.tool_for(NEED_LIST)?,
                window_days: self.window_days,
                extensions: self.extensions.clone(),
                internal_domains: self.internal_domains.clone(),
                page_size: self.page_size,
            }]),
            PLAN_SAMPLE => Ok(vec![StepAction::ExtractRoute {
                download_tool: self.tool_for(NEED_DOWNLOAD)?,
                company_rule: CompanyRule::RegistrableLabel,
                naming_rule: NamingRule::DatePrefixedStem,
                folder_template: self.folder_template.clone(),
            }]),
            PLAN_UPLOAD => Ok(vec![
                StepAction::EnsureFolders {
                    folder_template: self.folder_template.clone(),
                },
                StepAction::UploadBatch {
                    download_tool: self.tool_for(NEED_DOWNLOAD)?,
                    upload_tool: self.tool_for(NEED_UPLOAD)?,
                },
            ]),
            other => Err(format!("no scripted action for `{other}`")),
        }
    }

    fn review_probe(&mut self, report: &ProbeReport) -> ProbeDecision {
        match report.verdict {
            ProbeVerdict::Grounded => ProbeDecision::Proceed,
            ProbeVerdict::SuspectEmpty => ProbeDecision::Revise {
                reason: format!("{} returned no records; check the filter", report.tool_name),
            },
            ProbeVerdict::Failed => ProbeDecision::Revise {
                reason: match &report.error {
                    Some(e) => format!("{} failed: {e}", report.tool_name),
                    None => format!("{} failed", report.tool_name),
                },
            },
        }
    }
}
