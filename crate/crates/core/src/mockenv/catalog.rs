//! Tool catalogs matching the simulated services.

use crate::registry::{ParamKind, ParamSpec, ToolSchema};

fn p(name: &str, kind: ParamKind, required: bool, description: &str) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        kind,
        required,
        description: description.into(),
    }
}

fn tool(
    app: &str,
    function: &str,
    description: &str,
    params: Vec<ParamSpec>,
    returns: Option<&str>,
) -> ToolSchema {
    ToolSchema {
        app_id: app.into(),
        name: format!("{app}__{function}"),
        description: description.into(),
        params,
        returns_hint: returns.map(Into::into),
    }
}

/// Six mailbox tools and six drive tools. Only list/download/create/upload
/// /list_items are served by [`super::MockEnv`]; the rest exist to make
/// discovery non-trivial.
pub fn fixture_catalog() -> Vec<ToolSchema> {
    use ParamKind::*;
    vec![
        tool(
            "outlook",
            "list_emails",
            "List emails in the signed-in mailbox, newest first. Supports a received-after date filter, an attachments flag and top/skip paging.",
            vec![
                p(
                    "filter",
                    Object,
                    false,
                    "received_after (ISO-8601) and has_attachments",
                ),
                p("top", Integer, false, "page size"),
                p("skip", Integer, false, "records to skip"),
            ],
            Some("envelope with a value array of emails"),
        ),
        tool(
            "outlook",
            "get_email",
            "Get one mailbox item by id, including headers and body preview.",
            vec![p("message_id", String, true, "item id")],
            None,
        ),
        tool(
            "outlook",
            "download_attachment",
            "Download an attachment of an email as base64 content bytes.",
            vec![
                p("message_id", String, true, "owning email id"),
                p("attachment_id", String, true, "attachment id"),
            ],
            Some("envelope with one attachment record"),
        ),
        tool(
            "outlook",
            "list_attachments",
            "List attachment names, sizes and ids for an email.",
            vec![p("message_id", String, true, "email id")],
            None,
        ),
        tool(
            "outlook",
            "send_email",
            "Send an email to one or more recipients.",
            vec![
                p("to", Array, true, "recipient addresses"),
                p("subject", String, true, "subject line"),
                p("body", String, true, "plain text body"),
            ],
            None,
        ),
        tool(
            "outlook",
            "move_email",
            "Move an email to another mail folder such as Archive.",
            vec![
                p("message_id", String, true, "email id"),
                p("destination", String, true, "target mail folder"),
            ],
            None,
        ),
        tool(
            "onedrive",
            "list_items",
            "List items (files and folders) inside a drive folder.",
            vec![p(
                "folder_path",
                String,
                false,
                "folder path, root when empty",
            )],
            Some("envelope with a value array of items"),
        ),
        tool(
            "onedrive",
            "create_folder",
            "Create a folder under a parent path in the drive.",
            vec![
                p("name", String, true, "new folder name"),
                p(
                    "parent_path",
                    String,
                    false,
                    "parent folder, root when empty",
                ),
            ],
            Some("envelope with the created folder"),
        ),
        tool(
            "onedrive",
            "upload_file",
            "Upload a file into a drive folder from base64 content.",
            vec![
                p("folder_path", String, true, "destination folder"),
                p("filename", String, true, "file name"),
                p("content", String, true, "base64 bytes"),
            ],
            Some("envelope with the stored file"),
        ),
        tool(
            "onedrive",
            "download_file",
            "Download a file from the drive as base64 content.",
            vec![p("path", String, true, "file path")],
            None,
        ),
        tool(
            "onedrive",
            "delete_item",
            "Delete a file or folder from the drive.",
            vec![p("path", String, true, "item path")],
            None,
        ),
        tool(
            "onedrive",
            "share_item",
            "Create a sharing link for a drive item.",
            vec![
                p("path", String, true, "item path"),
                p("scope", String, false, "anonymous or organization"),
            ],
            None,
        ),
    ]
}

const EXTRA_APPS: &[(&str, &[&str])] = &[
    (
        "gmail",
        &[
            "threads",
            "labels",
            "drafts",
            "filters",
            "messages",
            "attachments",
        ],
    ),
    (
        "slack",
        &[
            "channels",
            "messages",
            "reactions",
            "users",
            "files",
            "reminders",
        ],
    ),
    (
        "jira",
        &[
            "issues", "projects", "sprints", "comments", "boards", "worklogs",
        ],
    ),
    (
        "github",
        &[
            "repositories",
            "issues",
            "pull requests",
            "releases",
            "gists",
            "workflows",
        ],
    ),
    (
        "gdrive",
        &[
            "files",
            "folders",
            "permissions",
            "revisions",
            "comments",
            "shared drives",
        ],
    ),
    (
        "calendar",
        &[
            "events",
            "calendars",
            "attendees",
            "reminders",
            "rooms",
            "schedules",
        ],
    ),
    (
        "salesforce",
        &[
            "accounts",
            "contacts",
            "leads",
            "opportunities",
            "cases",
            "reports",
        ],
    ),
    (
        "notion",
        &[
            "pages",
            "databases",
            "blocks",
            "comments",
            "users",
            "templates",
        ],
    ),
];

const OUTLOOK_EXTRA: &[&str] = &[
    "contacts",
    "calendar events",
    "mail rules",
    "categories",
    "tasks",
];
const ONEDRIVE_EXTRA: &[&str] = &[
    "permissions",
    "versions",
    "thumbnails",
    "shared links",
    "recycle bin",
];

const VERBS: &[(&str, &str)] = &[
    ("list", "List {n} available to the account."),
    ("get", "Get a single record from {n} by id."),
    ("create", "Create a new entry in {n}."),
    ("update", "Update fields of an existing entry in {n}."),
    ("delete", "Delete an entry from {n}."),
    ("search", "Search {n} by keyword."),
];

fn generated(app: &str, noun: &str, verb: &str, template: &str) -> ToolSchema {
    let function = format!("{verb}_{}", noun.replace(' ', "_"));
    tool(
        app,
        &function,
        &template.replace("{n}", noun),
        vec![p("id", ParamKind::String, false, "record id")],
        None,
    )
}

/// The fixture catalog plus generated tools, 200 in total. Outlook and
/// OneDrive also gain extra generated tools so app-scoped searches compete
/// against more than the fixture entries.
pub fn synthetic_catalog() -> Vec<ToolSchema> {
    let mut out = fixture_catalog();
    for noun in OUTLOOK_EXTRA {
        for (verb, template) in &VERBS[..4] {
            out.push(generated("outlook", noun, verb, template));
        }
    }
    for noun in ONEDRIVE_EXTRA {
        for (verb, template) in &VERBS[..4] {
            out.push(generated("onedrive", noun, verb, template));
        }
    }
    for (app, nouns) in EXTRA_APPS {
        for noun in *nouns {
            for (verb, template) in VERBS {
                out.push(generated(app, noun, verb, template));
            }
        }
    }
    out.truncate(200);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn catalog_sizes_and_uniqueness() {
        assert_eq!(fixture_catalog().len(), 12);
        let synth = synthetic_catalog();
        assert_eq!(synth.len(), 200);
        let names: BTreeSet<_> = synth.iter().map(|s| s.name.clone()).collect();
        assert_eq!(names.len(), 200);
    }
}
