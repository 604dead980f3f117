use std::collections::BTreeSet;

use skillforge::anchor::TodoStatus;
use skillforge::mockenv::{
    INTERNAL_DOMAIN, MockEnv, ResponseStyle, WINDOW_DAYS, WorldState, fixture_catalog, fixture_now,
    synthetic_catalog,
};
use skillforge::pipeline::{
    Event, MemoryChoice, PipelineConfig, PipelineError, RUNNING_EXAMPLE_GOAL, ReplayOptions,
    ScriptedPlanner, emit_skill, load_skill, replay_skill, run_pipeline,
};
use skillforge::registry::Registry;

fn registry() -> Registry {
    Registry::index_catalog(fixture_catalog()).unwrap()
}

/// Independent scan of the fixture: (message id, attachment id, sender
/// domain) for every attachment the workflow must archive.
fn oracle(world: &WorldState) -> BTreeSet<(String, String, String)> {
    let cutoff = world.now - chrono::Duration::days(WINDOW_DAYS);
    let mut out = BTreeSet::new();
    for m in &world.mailbox {
        let domain = m.sender_address.rsplit('@').next().unwrap().to_lowercase();
        if m.received_at < cutoff || domain == INTERNAL_DOMAIN || domain.ends_with(".agentr.dev") {
            continue;
        }
        for a in &m.attachments {
            let lower = a.filename.to_lowercase();
            if lower.ends_with(".pdf") || lower.ends_with(".xlsx") {
                out.insert((
                    m.message_id.clone(),
                    a.attachment_id.clone(),
                    domain.clone(),
                ));
            }
        }
    }
    out
}

async fn run(
    env: &MockEnv,
    config: &PipelineConfig,
) -> Result<skillforge::pipeline::PipelineRun, skillforge::pipeline::PipelineFailure> {
    let mut planner = ScriptedPlanner::new();
    run_pipeline(RUNNING_EXAMPLE_GOAL, &registry(), env, &mut planner, config).await
}

#[tokio::test(start_paused = true)]
async fn running_example_matches_oracle() {
    let env = MockEnv::from_seed(0);
    let expected = oracle(&env.snapshot());
    assert_eq!(expected.len(), 7, "{expected:?}");
    let run = run(&env, &PipelineConfig::default()).await.unwrap();
    assert!(
        run.transcript
            .contains_line("Fetched 7 emails with attachments.")
    );

    let world = env.snapshot();
    let files: Vec<&str> = world.files().map(|(p, _)| p).collect();
    assert_eq!(files.len(), expected.len());
    assert!(
        files
            .iter()
            .all(|p| p.starts_with("Email Attachments December/"))
    );
    assert!(files.contains(&"Email Attachments December/Acme Corp/2024-12-03_Invoice 7.pdf"));
    assert!(files.contains(&"Email Attachments December/Acme Corp/2024-12-10_Invoice 7_2.pdf"));
    // Every archived route traces back to exactly one oracle entry.
    let routed: BTreeSet<(String, String, String)> = run
        .routes
        .iter()
        .map(|r| {
            let domain = r
                .candidate
                .sender
                .rsplit('@')
                .next()
                .unwrap()
                .to_lowercase();
            (
                r.candidate.message_id.clone(),
                r.candidate.attachment_id.clone(),
                domain,
            )
        })
        .collect();
    assert_eq!(routed, expected);
    assert!(
        run.routes
            .iter()
            .all(|r| !r.candidate.sender.ends_with(INTERNAL_DOMAIN))
    );
    assert!(
        run.artifact
            .plan
            .items
            .iter()
            .all(|i| i.status == TodoStatus::Completed)
    );
    assert_eq!(run.uploaded, 7);
}

#[tokio::test(start_paused = true)]
async fn generated_seeds_match_oracle() {
    for seed in 1..=5 {
        let env = MockEnv::from_seed(seed);
        let expected = oracle(&env.snapshot());
        let run = run(&env, &PipelineConfig::default()).await.unwrap();
        assert_eq!(
            env.snapshot().files().count(),
            expected.len(),
            "seed {seed}"
        );
        assert_eq!(run.routes.len(), expected.len(), "seed {seed}");
        assert!(
            env.snapshot()
                .mailbox
                .iter()
                .any(|m| m.sender_address.ends_with(INTERNAL_DOMAIN) && !m.attachments.is_empty()),
            "seed {seed} should exercise the blocklist"
        );
    }
}

#[tokio::test(start_paused = true)]
async fn second_run_changes_nothing() {
    let env = MockEnv::from_seed(0);
    run(&env, &PipelineConfig::default()).await.unwrap();
    let after_first = env.snapshot();
    let second = run(&env, &PipelineConfig::default()).await.unwrap();
    assert_eq!(env.snapshot(), after_first);
    assert_eq!(second.uploaded, 0);
    assert_eq!(second.unchanged, 7);
}

#[tokio::test(start_paused = true)]
async fn empty_mailbox_halts_after_probe() {
    let env = MockEnv::new(WorldState::empty(fixture_now()));
    let failure = run(&env, &PipelineConfig::default()).await.unwrap_err();
    assert!(matches!(failure.error, PipelineError::ProbeRefused(_)));
    let verdicts: Vec<&str> = failure
        .transcript
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Probe { verdict, .. } => Some(verdict.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(verdicts, vec!["SUSPECT_EMPTY"]);
    assert_eq!(env.stats().mutations, 0);
    assert_eq!(env.snapshot().drive, WorldState::empty(fixture_now()).drive);
}

#[tokio::test(start_paused = true)]
async fn transcript_is_deterministic_and_ordered() {
    let a = run(&MockEnv::from_seed(3), &PipelineConfig::default())
        .await
        .unwrap();
    let b = run(&MockEnv::from_seed(3), &PipelineConfig::default())
        .await
        .unwrap();
    assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl());

    let t = &a.transcript;
    let first_search = t.position("search").unwrap();
    let first_probe = t.position("probe").unwrap();
    let first_batch = t.position("batch").unwrap();
    let memory = t.position("memory_proposal").unwrap();
    assert!(first_search < first_probe && first_probe < first_batch);
    assert!(memory < first_batch);
    assert_eq!(t.count("memory_proposal"), 1);
    // The paper-style combined requests come first.
    let queries: Vec<(String, Option<String>)> = t
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Search { request, .. } => Some((request.query.clone(), request.app_id.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(
        queries,
        vec![
            (
                "fetch emails download attachment".to_string(),
                Some("outlook".to_string())
            ),
            (
                "create folder upload file list items".to_string(),
                Some("onedrive".to_string())
            ),
        ]
    );
    assert!(t.events.iter().any(|e| matches!(e, Event::Refine { query, round: 2, .. } if query == "list messages get emails")));
}

/// Every step runs while its item is the in-progress anchor entry, and the
/// anchor advances before the next step starts.
#[tokio::test(start_paused = true)]
async fn steps_are_gated_by_the_anchor() {
    let run = run(&MockEnv::from_seed(0), &PipelineConfig::default())
        .await
        .unwrap();
    let mut current: Option<String> = None;
    let mut started = 0;
    for e in &run.transcript.events {
        match e {
            Event::Anchor { render, .. } => {
                current = render
                    .lines()
                    .find_map(|l| l.strip_prefix("[>] "))
                    .map(str::to_owned);
            }
            Event::StepStarted { item, .. } => {
                assert_eq!(current.as_deref(), Some(item.as_str()));
                started += 1;
            }
            _ => {}
        }
    }
    assert_eq!(started, 4);
    assert_eq!(run.artifact.step_actions.len(), 4);
}

#[tokio::test(start_paused = true)]
async fn context_flush_keeps_the_same_steps() {
    let plain = run(&MockEnv::from_seed(0), &PipelineConfig::default())
        .await
        .unwrap();
    let flushed_env = MockEnv::from_seed(0);
    let config = PipelineConfig {
        flush_context: true,
        ..PipelineConfig::default()
    };
    let flushed = run(&flushed_env, &config).await.unwrap();
    assert_eq!(plain.artifact.step_actions, flushed.artifact.step_actions);
    assert_eq!(flushed.transcript.count("context_flush"), 5);
}

#[tokio::test(start_paused = true)]
async fn accepted_memory_makes_reruns_skip() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig {
        memory: MemoryChoice::Accept {
            checkpoint: dir.path().join("processed.tsv"),
        },
        ..PipelineConfig::default()
    };
    let env = MockEnv::from_seed(0);
    run(&env, &config).await.unwrap();
    assert!(dir.path().join("processed.tsv").exists());
    let before = env.snapshot();
    env.reset_stats();
    let rerun = run(&env, &config).await.unwrap();
    assert_eq!(env.snapshot(), before);
    assert!(
        rerun
            .transcript
            .contains_line("Uploaded 0 new file(s); 0 already present; 7 skipped by checkpoint.")
    );
    assert_eq!(
        env.stats().calls_to("outlook__download_attachment"),
        1,
        "only the sample probe"
    );
}

#[tokio::test(start_paused = true)]
async fn synthetic_catalog_run_also_works() {
    let env = MockEnv::from_seed(0);
    let registry = Registry::index_catalog(synthetic_catalog()).unwrap();
    let mut planner = ScriptedPlanner::new();
    run_pipeline(
        RUNNING_EXAMPLE_GOAL,
        &registry,
        &env,
        &mut planner,
        &PipelineConfig::default(),
    )
    .await
    .unwrap();
    assert_eq!(env.snapshot().files().count(), 7);
}

#[tokio::test(start_paused = true)]
async fn replay_reproduces_and_detects_drift() {
    let env = MockEnv::from_seed(0);
    let original = run(&env, &PipelineConfig::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("skill.json");
    emit_skill(&original.artifact, &path).unwrap();
    let artifact = load_skill(&path).unwrap();
    assert_eq!(artifact, original.artifact);

    let fresh = MockEnv::from_seed(0);
    let transcript = replay_skill(&artifact, &fresh, &ReplayOptions::default())
        .await
        .unwrap();
    assert_eq!(fresh.snapshot(), env.snapshot());
    for name in ["search", "refine", "load", "probe"] {
        assert_eq!(transcript.count(name), 0, "{name}");
    }

    let drifted = MockEnv::from_seed(0);
    drifted.set_response_style(ResponseStyle::BareArray);
    let failure = replay_skill(&artifact, &drifted, &ReplayOptions::default())
        .await
        .unwrap_err();
    assert!(
        matches!(failure.error, PipelineError::LockMismatch { .. }),
        "{:?}",
        failure.error
    );
    assert_eq!(drifted.stats().mutations, 0);
}

#[tokio::test(start_paused = true)]
async fn incomplete_skill_is_refused() {
    let env = MockEnv::from_seed(0);
    let mut artifact = run(&env, &PipelineConfig::default())
        .await
        .unwrap()
        .artifact;
    artifact.locks.clear();
    let failure = replay_skill(&artifact, &MockEnv::from_seed(0), &ReplayOptions::default())
        .await
        .unwrap_err();
    assert!(matches!(failure.error, PipelineError::InvalidSkill(_)));
}
