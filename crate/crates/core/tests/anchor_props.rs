use std::collections::BTreeSet;

use proptest::prelude::*;
use skillforge::anchor::{TodoItem, TodoList, TodoStatus, parse_anchor, write_todos};

const PLAN: [&str; 4] = [
    "Load the mail and drive tools",
    "Fetch recent emails and keep qualifying attachments",
    "Sample one attachment and derive folder and file names",
    "Create folders and upload every attachment",
];

fn status() -> impl Strategy<Value = TodoStatus> {
    prop::sample::select(TodoStatus::ALL.to_vec())
}

fn proposal() -> impl Strategy<Value = Vec<TodoItem>> {
    prop::collection::vec(status(), 4).prop_map(|ss| {
        PLAN.iter()
            .zip(ss)
            .map(|(c, s)| TodoItem::new(*c, s))
            .collect()
    })
}

fn completed(list: &TodoList) -> BTreeSet<String> {
    list.items
        .iter()
        .filter(|i| i.status == TodoStatus::Completed)
        .map(|i| i.content.clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 512,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn completed_set_never_shrinks(proposals in prop::collection::vec(proposal(), 1..20)) {
        let mut list = TodoList::default();
        for p in proposals {
            let before = completed(&list);
            if let Ok(next) = write_todos(&list, p) {
                prop_assert!(before.is_subset(&completed(&next)));
                prop_assert_eq!(next.revision, list.revision + 1);
                list = next;
            }
        }
    }

    #[test]
    fn render_survives_a_flush(p in proposal()) {
        let Ok(list) = write_todos(&TodoList::default(), p) else { return Ok(()) };
        let restored = parse_anchor(&list.render()).unwrap();
        prop_assert_eq!(&restored.items, &list.items);
        prop_assert_eq!(restored.current_step(), list.current_step());
    }

    #[test]
    fn walking_the_plan_visits_every_item_in_order(n in 1usize..8) {
        let items: Vec<TodoItem> = (0..n).map(|i| TodoItem::pending(format!("step {i}"))).collect();
        let mut list = write_todos(&TodoList::default(), items).unwrap();
        let mut visited = Vec::new();
        while let Some(step) = list.current_step().cloned() {
            if step.status == TodoStatus::Pending {
                list = write_todos(&list, list.with_started(&step.content)).unwrap();
            }
            visited.push(step.content.clone());
            list = write_todos(&list, list.with_completed(&step.content)).unwrap();
        }
        prop_assert!(list.is_complete());
        prop_assert_eq!(visited, (0..n).map(|i| format!("step {i}")).collect::<Vec<_>>());
    }
}
