//! Company, folder and document naming for archived attachments.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Multi-label and common single-label public suffixes. Anything else is
/// treated as a one-label suffix.
const PUBLIC_SUFFIXES: &[&str] = &[
    "ac.uk", "co.jp", "co.nz", "co.uk", "co.za", "com.au", "com.br", "gov.uk", "net.au", "org.au",
    "org.uk", "com", "org", "net", "dev", "io", "co", "ai", "app", "biz", "de", "edu", "fr", "gov",
    "info", "uk", "us",
];

pub const DEFAULT_FOLDER_TEMPLATE: &str = "Email Attachments {month}/{company}";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NamingError {
    #[error("malformed sender address `{0}`")]
    MalformedAddress(String),
    #[error("`{0}` does not have an allowed extension")]
    DisallowedExtension(String),
    #[error("folder template `{0}` must mention {{company}}")]
    BadTemplate(String),
}

/// How a sender address becomes a company name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompanyRule {
    /// Registrable domain label, split on `-`/`_`, title-cased.
    RegistrableLabel,
}

/// How an attachment becomes a drive file name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamingRule {
    /// `<YYYY-MM-DD>_<sanitized stem>.<ext>`.
    DatePrefixedStem,
}

/// The domain part of an address, lowercased.
pub fn sender_domain(address: &str) -> Result<String, NamingError> {
    let malformed = || NamingError::MalformedAddress(address.to_owned());
    let (local, domain) = address.trim().rsplit_once('@').ok_or_else(malformed)?;
    let domain = domain.to_ascii_lowercase();
    let valid_label = |l: &str| {
        !l.is_empty()
            && l.chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    };
    if local.is_empty()
        || local.contains('@')
        || !domain.contains('.')
        || !domain.split('.').all(valid_label)
    {
        return Err(malformed());
    }
    Ok(domain)
}

/// Whether `address` belongs to one of `domains` or a subdomain of one.
pub fn is_internal(address: &str, domains: &[String]) -> bool {
    let Ok(domain) = sender_domain(address) else {
        return false;
    };
    domains.iter().any(|d| {
        let d = d.trim_start_matches('@').to_ascii_lowercase();
        domain == d || domain.ends_with(&format!(".{d}"))
    })
}

fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first
            .to_uppercase()
            .chain(chars.flat_map(char::to_lowercase))
            .collect(),
        None => String::new(),
    }
}

/// `jane@acme-corp.com` → `Acme Corp`, `a@b.co.uk` → `B`.
pub fn extract_company(address: &str) -> Result<String, NamingError> {
    let domain = sender_domain(address)?;
    let labels: Vec<&str> = domain.split('.').collect();
    let suffix_len = PUBLIC_SUFFIXES
        .iter()
        .filter(|s| domain == **s || domain.ends_with(&format!(".{s}")))
        .map(|s| s.split('.').count())
        .max()
        .unwrap_or(1);
    if labels.len() <= suffix_len {
        return Err(NamingError::MalformedAddress(address.to_owned()));
    }
    let label = labels[labels.len() - suffix_len - 1];
    let name = label
        .split(['-', '_'])
        .filter(|w| !w.is_empty())
        .map(title_case)
        .collect::<Vec<_>>()
        .join(" ");
    if name.is_empty() {
        return Err(NamingError::MalformedAddress(address.to_owned()));
    }
    Ok(name)
}

/// Splits at the last dot. A leading dot does not start an extension.
fn split_extension(filename: &str) -> Option<(&str, &str)> {
    match filename.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() && !ext.is_empty() => Some((stem, ext)),
        _ => None,
    }
}

pub fn has_allowed_extension(filename: &str, allowed: &[String]) -> bool {
    split_extension(filename).is_some_and(|(_, ext)| {
        allowed
            .iter()
            .any(|a| a.trim_start_matches('.').eq_ignore_ascii_case(ext))
    })
}

/// Drops path separators, control characters and characters drives reject,
/// then collapses runs of whitespace.
pub fn sanitize_stem(stem: &str) -> String {
    const REJECTED: &[char] = &['/', '\\', ':', '*', '?', '"', '<', '>', '|', '#', '%'];
    let kept: String = stem
        .chars()
        .filter(|c| !c.is_control() && !REJECTED.contains(c))
        .collect();
    let collapsed = kept.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_matches('.').trim().to_owned();
    if trimmed.is_empty() {
        "attachment".to_owned()
    } else {
        trimmed
    }
}

/// `2024-12-03` + `Invoice #7.pdf` → `2024-12-03_Invoice 7.pdf`. The original
/// extension keeps its case.
pub fn name_document(
    received_at: &DateTime<Utc>,
    filename: &str,
    allowed: &[String],
) -> Result<String, NamingError> {
    if !has_allowed_extension(filename, allowed) {
        return Err(NamingError::DisallowedExtension(filename.to_owned()));
    }
    let (stem, ext) = split_extension(filename).expect("checked above");
    let ext: String = ext.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    Ok(format!(
        "{}_{}.{ext}",
        received_at.format("%Y-%m-%d"),
        sanitize_stem(stem)
    ))
}

pub fn month_name(clock: &DateTime<Utc>) -> String {
    clock.format("%B").to_string()
}

/// Fills `{month}` and `{company}` in a folder template.
pub fn render_folder(template: &str, month: &str, company: &str) -> Result<String, NamingError> {
    if !template.contains("{company}") {
        return Err(NamingError::BadTemplate(template.to_owned()));
    }
    let company = sanitize_stem(company);
    Ok(template
        .replace("{month}", month)
        .replace("{company}", &company))
}

/// Hands out unique file names per folder, appending `_2`, `_3`, ... on
/// collision. Comparison ignores case.
#[derive(Debug, Default)]
pub struct NameAllocator {
    taken: BTreeMap<String, BTreeSet<String>>,
}

impl NameAllocator {
    pub fn allocate(&mut self, folder: &str, name: &str) -> String {
        let taken = self.taken.entry(folder.to_owned()).or_default();
        let (stem, ext) = match split_extension(name) {
            Some((s, e)) => (s.to_owned(), format!(".{e}")),
            None => (name.to_owned(), String::new()),
        };
        let mut candidate = name.to_owned();
        let mut n = 2;
        while taken.contains(&candidate.to_lowercase()) {
            candidate = format!("{stem}_{n}{ext}");
            n += 1;
        }
        taken.insert(candidate.to_lowercase());
        candidate
    }
}
