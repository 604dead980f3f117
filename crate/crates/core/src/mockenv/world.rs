use std::collections::BTreeMap;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as BASE64;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::env::{ErrorClass, ToolError};

pub(crate) mod b64 {
    use super::BASE64;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&BASE64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        BASE64.decode(text).map_err(serde::de::Error::custom)
    }
}

mod b64_opt {
    use super::BASE64;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => s.serialize_some(&BASE64.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|t| BASE64.decode(t).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub attachment_id: String,
    pub filename: String,
    #[serde(with = "b64")]
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MailMessage {
    pub message_id: String,
    pub sender_address: String,
    pub subject: String,
    pub received_at: DateTime<Utc>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Folder,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriveNode {
    pub path: String,
    pub kind: NodeKind,
    #[serde(default, with = "b64_opt", skip_serializing_if = "Option::is_none")]
    pub content: Option<Vec<u8>>,
}

/// How `outlook__list_emails` shapes its response. `BareArray` drops the
/// envelope and returns the message list directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStyle {
    #[default]
    Envelope,
    BareArray,
}

/// Everything the simulated services hold. Mutated only through tool calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub now: DateTime<Utc>,
    pub mailbox: Vec<MailMessage>,
    #[serde(default)]
    pub drive: BTreeMap<String, DriveNode>,
    #[serde(default)]
    pub response_style: ResponseStyle,
}

pub(crate) const MAIL_CONTEXT: &str = "https://graph.mock/v1.0/$metadata#users('me')/messages";
pub(crate) const ATTACHMENT_CONTEXT: &str =
    "https://graph.mock/v1.0/$metadata#users('me')/messages/attachments";
pub(crate) const DRIVE_CONTEXT: &str = "https://graph.mock/v1.0/$metadata#drive/items";

const DEFAULT_TOP: u64 = 10;

/// What a successful handler did to the world.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Effect {
    pub mutated: bool,
    pub written_file: Option<String>,
}

fn bad(message: impl Into<String>) -> ToolError {
    ToolError::new(ErrorClass::BadRequest, message)
}

fn str_arg<'a>(args: &'a Value, name: &str) -> Result<&'a str, ToolError> {
    args.get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| bad(format!("missing string argument `{name}`")))
}

fn envelope(context: &str, value: Vec<Value>) -> Value {
    json!({ "@odata.context": context, "value": value })
}

pub fn join_path(parent: &str, name: &str) -> String {
    if parent.is_empty() {
        name.to_owned()
    } else {
        format!("{parent}/{name}")
    }
}

fn parent_of(path: &str) -> &str {
    path.rsplit_once('/').map(|(p, _)| p).unwrap_or("")
}

impl WorldState {
    pub fn empty(now: DateTime<Utc>) -> Self {
        Self {
            now,
            mailbox: Vec::new(),
            drive: BTreeMap::new(),
            response_style: ResponseStyle::Envelope,
        }
    }

    pub fn folder_exists(&self, path: &str) -> bool {
        path.is_empty()
            || self
                .drive
                .get(path)
                .is_some_and(|n| n.kind == NodeKind::Folder)
    }

    /// Files as `(path, content)` in path order.
    pub fn files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.drive
            .values()
            .filter_map(|n| match (&n.kind, &n.content) {
                (NodeKind::File, Some(c)) => Some((n.path.as_str(), c.as_slice())),
                _ => None,
            })
    }

    /// Every drive node has an existing parent folder and every id is unique.
    pub fn check_invariants(&self) -> Result<(), String> {
        for node in self.drive.values() {
            if !self.folder_exists(parent_of(&node.path)) {
                return Err(format!("`{}` has no parent folder", node.path));
            }
        }
        let mut ids = std::collections::HashSet::new();
        for m in &self.mailbox {
            if !ids.insert(&m.message_id) {
                return Err(format!("duplicate message id `{}`", m.message_id));
            }
        }
        Ok(())
    }

    pub(crate) fn dispatch(
        &mut self,
        tool: &str,
        args: &Value,
    ) -> Result<(Value, Effect), ToolError> {
        match tool {
            "outlook__list_emails" => self.list_emails(args).map(|v| (v, Effect::default())),
            "outlook__download_attachment" => self
                .download_attachment(args)
                .map(|v| (v, Effect::default())),
            "onedrive__create_folder" => self.create_folder(args),
            "onedrive__upload_file" => self.upload_file(args),
            "onedrive__list_items" => self.list_items(args).map(|v| (v, Effect::default())),
            other => Err(ToolError::new(
                ErrorClass::UnknownTool,
                format!("`{other}` is not served by this environment"),
            )),
        }
    }

    fn list_emails(&self, args: &Value) -> Result<Value, ToolError> {
        let filter = args.get("filter").cloned().unwrap_or(Value::Null);
        let received_after = match filter.get("received_after") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(
                DateTime::parse_from_rfc3339(s)
                    .map_err(|e| {
                        ToolError::new(
                            ErrorClass::BadFilter,
                            format!("received_after `{s}` is not ISO-8601: {e}"),
                        )
                    })?
                    .with_timezone(&Utc),
            ),
            Some(other) => {
                return Err(ToolError::new(
                    ErrorClass::BadFilter,
                    format!("received_after must be a string, got {other}"),
                ));
            }
        };
        let has_attachments = filter.get("has_attachments").and_then(Value::as_bool);
        let top = match args.get("top") {
            None => DEFAULT_TOP,
            Some(v) => v
                .as_u64()
                .filter(|t| *t >= 1)
                .ok_or_else(|| bad("top must be a positive integer"))?,
        };
        let skip = args.get("skip").and_then(Value::as_u64).unwrap_or(0);

        let mut matching: Vec<&MailMessage> = self
            .mailbox
            .iter()
            .filter(|m| received_after.is_none_or(|after| m.received_at >= after))
            .filter(|m| has_attachments.is_none_or(|want| !m.attachments.is_empty() == want))
            .collect();
        matching.sort_by(|a, b| {
            b.received_at
                .cmp(&a.received_at)
                .then_with(|| a.message_id.cmp(&b.message_id))
        });
        let count = matching.len();
        let page: Vec<Value> = matching
            .into_iter()
            .skip(skip as usize)
            .take(top as usize)
            .map(message_record)
            .collect();
        Ok(match self.response_style {
            ResponseStyle::Envelope => json!({
                "@odata.context": MAIL_CONTEXT,
                "@odata.count": count,
                "value": page,
            }),
            ResponseStyle::BareArray => Value::Array(page),
        })
    }

    fn download_attachment(&self, args: &Value) -> Result<Value, ToolError> {
        let message_id = str_arg(args, "message_id")?;
        let attachment_id = str_arg(args, "attachment_id")?;
        let message = self
            .mailbox
            .iter()
            .find(|m| m.message_id == message_id)
            .ok_or_else(|| {
                ToolError::new(ErrorClass::NotFound, format!("message `{message_id}`"))
            })?;
        let att = message
            .attachments
            .iter()
            .find(|a| a.attachment_id == attachment_id)
            .ok_or_else(|| {
                ToolError::new(
                    ErrorClass::NotFound,
                    format!("attachment `{attachment_id}`"),
                )
            })?;
        Ok(envelope(
            ATTACHMENT_CONTEXT,
            vec![json!({
                "id": att.attachment_id,
                "name": att.filename,
                "size": att.content.len(),
                "contentBytes": BASE64.encode(&att.content),
            })],
        ))
    }

    fn create_folder(&mut self, args: &Value) -> Result<(Value, Effect), ToolError> {
        let name = str_arg(args, "name")?;
        let parent = args
            .get("parent_path")
            .and_then(Value::as_str)
            .unwrap_or("");
        if name.is_empty() || name.contains('/') {
            return Err(bad(format!("invalid folder name `{name}`")));
        }
        if !self.folder_exists(parent) {
            return Err(ToolError::new(
                ErrorClass::ParentNotFound,
                format!("parent `{parent}` does not exist"),
            ));
        }
        let path = join_path(parent, name);
        match self.drive.get(&path) {
            Some(n) if n.kind == NodeKind::Folder => {
                return Err(ToolError::new(
                    ErrorClass::AlreadyExists,
                    format!("folder `{path}` already exists"),
                ));
            }
            Some(_) => {
                return Err(ToolError::new(
                    ErrorClass::Conflict,
                    format!("a file occupies `{path}`"),
                ));
            }
            None => {}
        }
        self.drive.insert(
            path.clone(),
            DriveNode {
                path: path.clone(),
                kind: NodeKind::Folder,
                content: None,
            },
        );
        let body = envelope(
            DRIVE_CONTEXT,
            vec![json!({ "path": path, "name": name, "folder": true })],
        );
        Ok((
            body,
            Effect {
                mutated: true,
                written_file: None,
            },
        ))
    }

    fn upload_file(&mut self, args: &Value) -> Result<(Value, Effect), ToolError> {
        let folder = str_arg(args, "folder_path")?;
        let filename = str_arg(args, "filename")?;
        let encoded = str_arg(args, "content")?;
        if filename.is_empty() || filename.contains('/') {
            return Err(bad(format!("invalid filename `{filename}`")));
        }
        let content = BASE64
            .decode(encoded)
            .map_err(|e| bad(format!("content is not base64: {e}")))?;
        if !self.folder_exists(folder) {
            return Err(ToolError::new(
                ErrorClass::FolderNotFound,
                format!("folder `{folder}` does not exist"),
            ));
        }
        let path = join_path(folder, filename);
        let created = match self.drive.get(&path) {
            Some(n) if n.kind == NodeKind::File && n.content.as_deref() == Some(&content) => false,
            Some(_) => {
                return Err(ToolError::new(
                    ErrorClass::Conflict,
                    format!("`{path}` exists with different content"),
                ));
            }
            None => {
                self.drive.insert(
                    path.clone(),
                    DriveNode {
                        path: path.clone(),
                        kind: NodeKind::File,
                        content: Some(content.clone()),
                    },
                );
                true
            }
        };
        let body = envelope(
            DRIVE_CONTEXT,
            vec![json!({
                "path": path,
                "name": filename,
                "size": content.len(),
                "created": created,
            })],
        );
        let effect = Effect {
            mutated: created,
            written_file: created.then_some(path),
        };
        Ok((body, effect))
    }

    fn list_items(&self, args: &Value) -> Result<Value, ToolError> {
        let folder = args
            .get("folder_path")
            .and_then(Value::as_str)
            .unwrap_or("");
        if !self.folder_exists(folder) {
            return Err(ToolError::new(
                ErrorClass::FolderNotFound,
                format!("folder `{folder}` does not exist"),
            ));
        }
        let items = self
            .drive
            .values()
            .filter(|n| parent_of(&n.path) == folder)
            .map(|n| {
                json!({
                    "name": n.path.rsplit('/').next().unwrap_or(&n.path),
                    "path": n.path,
                    "kind": n.kind,
                })
            })
            .collect();
        Ok(envelope(DRIVE_CONTEXT, items))
    }
}

fn message_record(m: &MailMessage) -> Value {
    json!({
        "id": m.message_id,
        "subject": m.subject,
        "from": { "emailAddress": { "address": m.sender_address } },
        "receivedDateTime": m.received_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "hasAttachments": !m.attachments.is_empty(),
        "attachments": m.attachments.iter().map(|a| json!({
            "id": a.attachment_id,
            "name": a.filename,
            "size": a.content.len(),
        })).collect::<Vec<_>>(),
    })
}
