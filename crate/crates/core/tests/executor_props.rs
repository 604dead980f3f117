use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD as BASE64;
use proptest::prelude::*;
use serde_json::json;
use skillforge::ErrorClass;
use skillforge::env::Environment;
use skillforge::executor::{
    BatchError, BatchOptions, CheckpointStore, TaskError, TaskOutcome, TaskSpec, run_batch,
};
use skillforge::mockenv::{FaultRule, MockEnv, WorldState, fixture_now};
use skillforge::probe::{LockTable, LockedSchema, args_digest, detect_envelope, infer_shape};

const UPLOAD: &str = "onedrive__upload_file";

fn paused_runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .enable_time()
        .start_paused(true)
        .build()
        .unwrap()
}

fn upload_args(i: usize) -> serde_json::Value {
    json!({
        "folder_path": "Inbox Files",
        "filename": format!("f{i:03}.pdf"),
        "content": BASE64.encode(format!("%PDF body {i}")),
    })
}

fn tasks(n: usize) -> Vec<TaskSpec> {
    (0..n)
        .map(|i| TaskSpec::new(format!("t{i:03}"), UPLOAD, upload_args(i)))
        .collect()
}

/// A drive with the target folder, and an upload lock learned from a
/// scratch copy of it.
async fn setup(latency_ms: u64) -> (MockEnv, LockTable) {
    let world = {
        let scratch = MockEnv::new(WorldState::empty(fixture_now()));
        scratch
            .call("onedrive__create_folder", &json!({"name": "Inbox Files"}))
            .await
            .unwrap();
        scratch.snapshot()
    };
    let scratch = MockEnv::new(world.clone());
    let sample_args = json!({"folder_path": "Inbox Files", "filename": "probe.pdf", "content": ""});
    let sample = scratch.call(UPLOAD, &sample_args).await.unwrap();
    let shape = infer_shape(&[sample]).unwrap();
    let locks = LockTable::new();
    locks.insert(LockedSchema {
        tool_name: UPLOAD.into(),
        envelope_path: detect_envelope(&shape),
        shape,
        sample_count: 1,
        probe_args_digest: args_digest(&sample_args),
    });
    let env = MockEnv::new(world).with_latency(Duration::from_millis(latency_ms));
    (env, locks)
}

fn uploaded_path(outcome: &TaskOutcome) -> Option<String> {
    match outcome {
        TaskOutcome::Success { value, .. } => value["value"][0]["path"].as_str().map(str::to_owned),
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn in_flight_never_exceeds_the_ceiling(n in 1usize..60, ceiling in 1usize..20, latency in 1u64..20, fault_every in 2u64..9) {
        paused_runtime().block_on(async {
            let (env, locks) = setup(latency).await;
            env.set_faults(vec![FaultRule::new(UPLOAD, fault_every, ErrorClass::RateLimited)]);
            let result = run_batch(&env, &locks, &tasks(n), &BatchOptions::new(ceiling)).await.unwrap();
            assert!(env.stats().max_in_flight <= ceiling, "{} > {ceiling}", env.stats().max_in_flight);
            assert_eq!(result.outcomes.len(), n);
        });
    }

    #[test]
    fn outcomes_follow_input_order(n in 1usize..40, ceiling in 1usize..12, fault_every in 2u64..6) {
        paused_runtime().block_on(async {
            let (env, locks) = setup(5).await;
            env.set_faults(vec![FaultRule::new(UPLOAD, fault_every, ErrorClass::RateLimited)]);
            let result = run_batch(&env, &locks, &tasks(n), &BatchOptions::new(ceiling)).await.unwrap();
            for (i, outcome) in result.outcomes.iter().enumerate() {
                match outcome {
                    TaskOutcome::Failed { error: TaskError::Tool(e), .. } => {
                        assert_eq!(e.class, ErrorClass::RateLimited)
                    }
                    other => assert_eq!(uploaded_path(other), Some(format!("Inbox Files/f{i:03}.pdf"))),
                }
            }
            let mut order = result.completion_order.clone();
            order.sort_unstable();
            assert_eq!(order, (0..n).collect::<Vec<_>>());
        });
    }

    #[test]
    fn more_concurrency_is_never_slower(n in 1usize..80, latency in 1u64..15) {
        paused_runtime().block_on(async {
            let mut previous = Duration::MAX;
            for ceiling in 1..=(n + 2).min(24) {
                let (env, locks) = setup(latency).await;
                let start = tokio::time::Instant::now();
                run_batch(&env, &locks, &tasks(n), &BatchOptions::new(ceiling)).await.unwrap();
                let elapsed = start.elapsed();
                assert!(elapsed <= previous, "ceiling {ceiling}: {elapsed:?} > {previous:?}");
                previous = elapsed;
            }
        });
    }

    #[test]
    fn crash_at_any_prefix_then_resume_writes_each_file_once(n in 1usize..25, crash_after in 0usize..25, ceiling in 1usize..6) {
        let crash_after = crash_after.min(n);
        let dir = tempfile::tempdir().unwrap();
        paused_runtime().block_on(async {
            let (env, locks) = setup(3).await;
            let path = dir.path().join("processed.tsv");
            let store = Arc::new(CheckpointStore::open(&path).unwrap());
            let crashing = BatchOptions::new(ceiling).checkpoint(store).halt_after(crash_after);
            match run_batch(&env, &locks, &tasks(n), &crashing).await {
                Err(BatchError::Interrupted { completed }) => assert!(completed <= crash_after),
                Ok(r) => assert_eq!(r.successes(), n),
                Err(e) => panic!("{e}"),
            }
            // Fresh process: reopen the store from disk.
            let store = Arc::new(CheckpointStore::open(&path).unwrap());
            let recorded = store.len();
            assert!(recorded <= crash_after);
            let resumed = run_batch(&env, &locks, &tasks(n), &BatchOptions::new(ceiling).checkpoint(store)).await.unwrap();
            assert_eq!(resumed.skipped(), recorded);
            assert_eq!(resumed.successes() + resumed.skipped(), n);

            let stats = env.stats();
            assert!(stats.file_writes.values().all(|w| *w == 1), "{:?}", stats.file_writes);
            let files: BTreeSet<String> = env.snapshot().files().map(|(p, _)| p.to_owned()).collect();
            let expected: BTreeSet<String> = (0..n).map(|i| format!("Inbox Files/f{i:03}.pdf")).collect();
            assert_eq!(files, expected);
        });
    }
}
