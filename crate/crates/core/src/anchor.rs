//! Linear plan anchor.
//!
//! The plan is a flat todo list kept outside any transcript. Statuses only
//! move forward, at most one item is in progress, and the rendered block is
//! what a planner sees at the top of its context on every turn.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TodoStatus {
    Pending,
    InProgress,
    Completed,
}

impl TodoStatus {
    pub const ALL: [TodoStatus; 3] = [
        TodoStatus::Pending,
        TodoStatus::InProgress,
        TodoStatus::Completed,
    ];

    fn marker(self) -> &'static str {
        match self {
            TodoStatus::Pending => "[ ]",
            TodoStatus::InProgress => "[>]",
            TodoStatus::Completed => "[x]",
        }
    }

    fn from_marker(marker: &str) -> Option<Self> {
        TodoStatus::ALL.into_iter().find(|s| s.marker() == marker)
    }

    /// Position in the front-to-back ordering of a valid list.
    fn stage(self) -> u8 {
        match self {
            TodoStatus::Completed => 0,
            TodoStatus::InProgress => 1,
            TodoStatus::Pending => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TodoItem {
    pub content: String,
    pub status: TodoStatus,
}

impl TodoItem {
    pub fn new(content: impl Into<String>, status: TodoStatus) -> Self {
        Self {
            content: content.into(),
            status,
        }
    }

    pub fn pending(content: impl Into<String>) -> Self {
        Self::new(content, TodoStatus::Pending)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TodoList {
    pub items: Vec<TodoItem>,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnchorError {
    #[error("todo content must not be empty")]
    EmptyContent,
    #[error("duplicate todo `{0}`")]
    DuplicateContent(String),
    #[error("more than one todo is in progress")]
    MultipleInProgress,
    #[error("`{0}` is out of order: work must proceed front to back")]
    NonLinearOrder(String),
    #[error("completed todo `{0}` may not be reopened or dropped")]
    RegressionRejected(String),
    #[error("unparseable anchor line: {0}")]
    Unparseable(String),
}

/// Replaces the whole plan with `proposed`.
///
/// Accepted when every content is non-empty and unique, at most one item is
/// in progress, statuses read completed* → in_progress? → pending* from front
/// to back, and nothing completed in `current` is reopened or removed.
pub fn write_todos(current: &TodoList, proposed: Vec<TodoItem>) -> Result<TodoList, AnchorError> {
    let mut seen = HashSet::new();
    for item in &proposed {
        if item.content.trim().is_empty() {
            return Err(AnchorError::EmptyContent);
        }
        if !seen.insert(item.content.as_str()) {
            return Err(AnchorError::DuplicateContent(item.content.clone()));
        }
    }
    if proposed
        .iter()
        .filter(|i| i.status == TodoStatus::InProgress)
        .count()
        > 1
    {
        return Err(AnchorError::MultipleInProgress);
    }
    for pair in proposed.windows(2) {
        if pair[0].status.stage() > pair[1].status.stage() {
            return Err(AnchorError::NonLinearOrder(pair[1].content.clone()));
        }
    }
    for done in current
        .items
        .iter()
        .filter(|i| i.status == TodoStatus::Completed)
    {
        let still_done = proposed
            .iter()
            .any(|p| p.content == done.content && p.status == TodoStatus::Completed);
        if !still_done {
            return Err(AnchorError::RegressionRejected(done.content.clone()));
        }
    }
    Ok(TodoList {
        items: proposed,
        revision: current.revision + 1,
    })
}

/// One line per item: status marker, a space, the content.
pub fn render_anchor(list: &TodoList) -> String {
    list.items
        .iter()
        .map(|i| format!("{} {}", i.status.marker(), i.content))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Rebuilds the items of a rendered anchor. The revision is not part of the
/// render and comes back as 0.
pub fn parse_anchor(text: &str) -> Result<TodoList, AnchorError> {
    let items = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            let (marker, content) = line
                .split_at_checked(3)
                .ok_or_else(|| AnchorError::Unparseable(line.to_owned()))?;
            let status = TodoStatus::from_marker(marker)
                .ok_or_else(|| AnchorError::Unparseable(line.to_owned()))?;
            let content = content
                .strip_prefix(' ')
                .ok_or_else(|| AnchorError::Unparseable(line.to_owned()))?;
            Ok(TodoItem::new(content, status))
        })
        .collect::<Result<_, _>>()?;
    Ok(TodoList { items, revision: 0 })
}

/// The in-progress item, else the first pending one, else `None`.
pub fn current_step(list: &TodoList) -> Option<&TodoItem> {
    list.items
        .iter()
        .find(|i| i.status == TodoStatus::InProgress)
        .or_else(|| list.items.iter().find(|i| i.status == TodoStatus::Pending))
}

impl TodoList {
    pub fn current_step(&self) -> Option<&TodoItem> {
        current_step(self)
    }

    pub fn render(&self) -> String {
        render_anchor(self)
    }

    pub fn is_complete(&self) -> bool {
        self.items.iter().all(|i| i.status == TodoStatus::Completed)
    }

    /// The proposal that marks `content` in progress (and nothing else).
    pub fn with_started(&self, content: &str) -> Vec<TodoItem> {
        self.items
            .iter()
            .map(|i| {
                let status = if i.content == content {
                    TodoStatus::InProgress
                } else {
                    i.status
                };
                TodoItem::new(i.content.clone(), status)
            })
            .collect()
    }

    /// The proposal that completes `content` and starts the next pending item.
    pub fn with_completed(&self, content: &str) -> Vec<TodoItem> {
        let mut items: Vec<TodoItem> = self
            .items
            .iter()
            .map(|i| {
                let status = if i.content == content {
                    TodoStatus::Completed
                } else {
                    i.status
                };
                TodoItem::new(i.content.clone(), status)
            })
            .collect();
        if !items.iter().any(|i| i.status == TodoStatus::InProgress)
            && let Some(next) = items.iter_mut().find(|i| i.status == TodoStatus::Pending)
        {
            next.status = TodoStatus::InProgress;
        }
        items
    }
}

impl fmt::Display for TodoList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> Vec<TodoItem> {
        vec![
            TodoItem::new(
                "Load functions for Outlook and OneDrive",
                TodoStatus::InProgress,
            ),
            TodoItem::pending("Fetch Outlook emails (past 15 days) and filter for (.pdf, .xlsx)"),
            TodoItem::pending(
                "Process sample: Download, extract Company Name, determine Document Name",
            ),
            TodoItem::pending(
                "Create 'Email Attachments December/{Company Name}' folders and upload",
            ),
        ]
    }

    #[test]
    fn initial_plan_is_accepted() {
        let list = write_todos(&TodoList::default(), plan()).unwrap();
        assert_eq!(list.revision, 1);
        assert_eq!(current_step(&list).unwrap().content, plan()[0].content);
    }

    #[test]
    fn forward_transition_and_regression() {
        let list = write_todos(&TodoList::default(), plan()).unwrap();
        let first = list.items[0].content.clone();
        let next = write_todos(&list, list.with_completed(&first)).unwrap();
        assert_eq!(next.revision, 2);
        assert_eq!(next.items[0].status, TodoStatus::Completed);
        assert_eq!(next.items[1].status, TodoStatus::InProgress);

        let mut reopened = next.items.clone();
        reopened[0].status = TodoStatus::Pending;
        reopened[1].status = TodoStatus::Pending;
        assert_eq!(
            write_todos(&next, reopened),
            Err(AnchorError::RegressionRejected(first.clone()))
        );
        let dropped = next.items[1..].to_vec();
        assert_eq!(
            write_todos(&next, dropped),
            Err(AnchorError::RegressionRejected(first))
        );
    }

    #[test]
    fn structural_rejections() {
        let mut two = plan();
        two[1].status = TodoStatus::InProgress;
        assert_eq!(
            write_todos(&TodoList::default(), two),
            Err(AnchorError::MultipleInProgress)
        );
        let mut gap = plan();
        gap[0].status = TodoStatus::Pending;
        gap[2].status = TodoStatus::Completed;
        assert!(matches!(
            write_todos(&TodoList::default(), gap),
            Err(AnchorError::NonLinearOrder(_))
        ));
        let dup = vec![TodoItem::pending("a"), TodoItem::pending("a")];
        assert_eq!(
            write_todos(&TodoList::default(), dup),
            Err(AnchorError::DuplicateContent("a".into()))
        );
        assert_eq!(
            write_todos(&TodoList::default(), vec![TodoItem::pending(" ")]),
            Err(AnchorError::EmptyContent)
        );
    }

    #[test]
    fn appends_after_completed_items_are_allowed() {
        let list = write_todos(&TodoList::default(), plan()).unwrap();
        let mut items = list.with_completed(&plan()[0].content);
        items.insert(1, TodoItem::pending("Verify attachment metadata"));
        // Inserted pending item now precedes the in-progress one.
        assert!(write_todos(&list, items.clone()).is_err());
        items[1].status = TodoStatus::InProgress;
        items[2].status = TodoStatus::Pending;
        assert!(write_todos(&list, items).is_ok());
    }

    #[test]
    fn render_is_stable() {
        assert_eq!(render_anchor(&TodoList::default()), "");
        let list = write_todos(&TodoList::default(), plan()).unwrap();
        let text = render_anchor(&list);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "[>] Load functions for Outlook and OneDrive");
        assert!(lines[1..].iter().all(|l| l.starts_with("[ ] ")));
        let same = write_todos(&list, list.items.clone()).unwrap();
        assert_eq!(render_anchor(&same), text);
        assert_eq!(parse_anchor(&text).unwrap().items, list.items);
    }

    #[test]
    fn current_step_selection() {
        let mut list = TodoList {
            items: plan(),
            revision: 1,
        };
        for item in &mut list.items {
            item.status = TodoStatus::Completed;
        }
        assert_eq!(current_step(&list), None);
        list.items[2].status = TodoStatus::Pending;
        list.items[3].status = TodoStatus::Pending;
        assert_eq!(current_step(&list).unwrap().content, plan()[2].content);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            parse_anchor("- nope"),
            Err(AnchorError::Unparseable(_))
        ));
    }
}
