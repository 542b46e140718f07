use std::collections::{HashMap, HashSet};

use saleval::annotation::{
    read_export, write_export, AnnotationStore, NextTask, QualityRule, SessionStatus, StoreOptions,
    SubmitOutcome,
};
use saleval::saliency::Method;
use saleval::tasks::{build_assignment, AssignmentPlan, Task};
use saleval::Error;

mod common;
use common::task_grid as grid;

fn small() -> (Vec<Task>, AssignmentPlan) {
    let tasks = grid(4, &[Method::Random, Method::Lime], &[1, 2]);
    let plan = build_assignment(&tasks, 2, 4, 1).unwrap();
    (tasks, plan)
}

fn run_session(
    store: &mut AnnotationStore,
    token: &str,
    start: u64,
    per_task: u64,
    label: impl Fn(usize) -> usize,
) -> String {
    let s = store.open_session(token, start).unwrap();
    let mut now = start;
    let mut i = 0;
    while let NextTask::Task(v) = store.next_task(&s.session_id).unwrap() {
        now += per_task;
        store
            .submit(&s.session_id, &v.task_id, label(i), per_task, now)
            .unwrap();
        i += 1;
    }
    s.session_id
}

#[test]
fn sessions_take_lowest_free_batch_and_refuse_repeats() {
    let (tasks, plan) = small();
    let mut store = AnnotationStore::in_memory(tasks, plan, StoreOptions::default()).unwrap();
    assert_eq!(store.open_session("alice", 0).unwrap().batch, 0);
    assert_eq!(store.open_session("bob", 0).unwrap().batch, 1);
    let err = store.open_session("alice", 5).unwrap_err();
    assert!(matches!(err, Error::Refused(_)) && err.to_string().contains("already participated"));
}

#[test]
fn paper_scale_plan_fills_after_200_workers() {
    let tasks = grid(100, &Method::STANDARD, &[5, 10, 20, 30, 40]);
    assert_eq!(tasks.len(), 4000);
    let plan = build_assignment(&tasks, 5, 100, 0).unwrap();
    let mut store = AnnotationStore::in_memory(tasks, plan, StoreOptions::default()).unwrap();
    for w in 0..200 {
        assert_eq!(store.open_session(&format!("w{w}"), 0).unwrap().batch, w);
    }
    let err = store.open_session("w200", 0).unwrap_err();
    assert!(err.to_string().contains("experiment full"), "{err}");
}

#[test]
fn next_task_serves_batch_in_order_and_hides_server_fields() {
    let (tasks, plan) = small();
    let first = plan.batches[0][0].clone();
    let mut store = AnnotationStore::in_memory(tasks, plan, StoreOptions::default()).unwrap();
    let s = store.open_session("w", 0).unwrap();
    let NextTask::Task(view) = store.next_task(&s.session_id).unwrap() else {
        panic!("expected a task")
    };
    assert_eq!(view.task_id, first);
    let json = serde_json::to_value(&view).unwrap();
    let keys: HashSet<&str> = json
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(
        keys,
        HashSet::from(["task_id", "rendered", "label_options"])
    );
    for hidden in [
        "ground_truth",
        "method",
        "k",
        "sample_id",
        "shown_positions",
    ] {
        assert!(!json.to_string().contains(&format!("\"{hidden}\"")));
    }
    assert!(store.next_task("nope").is_err());
}

#[test]
fn submissions_advance_cursor_and_are_idempotent() {
    let (tasks, plan) = small();
    let batch = plan.batches[0].clone();
    let mut store = AnnotationStore::in_memory(tasks, plan, StoreOptions::default()).unwrap();
    let s = store.open_session("w", 0).unwrap();
    let sid = s.session_id.clone();
    assert!(
        store.submit(&sid, &batch[1], 1, 10, 1).is_err(),
        "out of order"
    );
    assert!(
        store.submit(&sid, &batch[0], 3, 10, 1).is_err(),
        "label C+1"
    );
    assert_eq!(
        store.submit(&sid, &batch[0], 1, 10, 1).unwrap(),
        SubmitOutcome::Stored
    );
    assert_eq!(store.session(&sid).unwrap().cursor, 1);
    assert_eq!(
        store.submit(&sid, &batch[0], 1, 10, 1).unwrap(),
        SubmitOutcome::Duplicate
    );
    assert_eq!(store.annotations().len(), 1);
    assert!(
        store.submit(&sid, &batch[0], 2, 10, 1).is_err(),
        "conflicting resubmit"
    );
    for (i, t) in batch.iter().enumerate().skip(1) {
        store.submit(&sid, t, 0, 10, 1 + i as u64).unwrap();
    }
    assert_eq!(
        store.next_task(&sid).unwrap(),
        NextTask::Done { done: true }
    );
    assert_eq!(store.session(&sid).unwrap().status, SessionStatus::Complete);
}

#[test]
fn quality_filter_rejects_fast_and_constant_sessions() {
    let (tasks, plan) = small();
    let mut store = AnnotationStore::in_memory(tasks, plan, StoreOptions::default()).unwrap();
    // Four tasks per batch: 15 s each is a 60 s session.
    let fast = run_session(&mut store, "fast", 0, 15_000, |i| i % 2 + 1);
    let constant = run_session(&mut store, "idk", 0, 270_000, |_| 0);
    let good = run_session(&mut store, "good", 0, 270_000, |i| i % 3);
    let report = store.filter_sessions(&QualityRule::default(), 10).unwrap();
    let rejected: HashSet<&str> = report.rejected.iter().map(|(s, _)| s.as_str()).collect();
    assert_eq!(rejected, HashSet::from([fast.as_str(), constant.as_str()]));
    assert_eq!(report.accepted, vec![good.clone()]);

    // Rejected batches go back to the queue, lowest index first.
    let next = store.open_session("replacement", 20).unwrap();
    assert_eq!(next.batch, 0);
    let again = store.filter_sessions(&QualityRule::default(), 30).unwrap();
    assert!(again.rejected.is_empty());
    assert_eq!(again.previously_rejected, 2);

    // Rejection is a status; the records stay.
    assert_eq!(store.annotations().len(), 12);
    assert_eq!(store.export(false).len(), 12);
    assert_eq!(store.export(true).len(), 4);
}

#[test]
fn export_is_ordered_and_round_trips() {
    let (tasks, plan) = small();
    let mut store = AnnotationStore::in_memory(tasks, plan, StoreOptions::default()).unwrap();
    assert!(store.export(false).is_empty());
    for w in 0..8 {
        run_session(&mut store, &format!("w{w}"), 0, 60_000, |i| i % 2 + 1);
    }
    let records = store.export(false);
    let keys: Vec<(String, String)> = records
        .iter()
        .map(|r| {
            (
                r.annotation.task_id.clone(),
                r.annotation.worker_token.clone(),
            )
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let mut buf = Vec::new();
    write_export(&mut buf, &records).unwrap();
    let back = read_export(buf.as_slice()).unwrap();
    let mut buf2 = Vec::new();
    write_export(&mut buf2, &back).unwrap();
    assert_eq!(buf, buf2);

    // Full plan: every task has exactly `replication` accepted labels and
    // no worker saw two tasks of one sample.
    let per_task = store.accepted_labels();
    assert!(per_task.values().all(|v| v.len() == 2));
    let sample_of: HashMap<String, String> = store
        .export(true)
        .iter()
        .map(|r| {
            (
                r.annotation.task_id.clone(),
                store.task(&r.annotation.task_id).unwrap().sample_id.clone(),
            )
        })
        .collect();
    let mut seen = HashSet::new();
    for r in store.export(true) {
        assert!(seen.insert((
            r.annotation.worker_token.clone(),
            sample_of[&r.annotation.task_id].clone()
        )));
    }
}

#[test]
fn log_replay_restores_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    let (tasks, plan) = small();
    let opts = StoreOptions {
        snapshot_every: 5,
        ..Default::default()
    };
    let (export, sessions) = {
        let mut store = AnnotationStore::open(&path, tasks.clone(), plan.clone(), opts).unwrap();
        run_session(&mut store, "a", 0, 60_000, |i| i % 2 + 1);
        run_session(&mut store, "b", 0, 1, |_| 1);
        store.filter_sessions(&QualityRule::default(), 9).unwrap();
        let s = store.open_session("c", 10).unwrap();
        let NextTask::Task(v) = store.next_task(&s.session_id).unwrap() else {
            panic!()
        };
        store.submit(&s.session_id, &v.task_id, 2, 5, 11).unwrap();
        (store.export(false), store.sessions().to_vec())
    };
    assert!(dir.path().join("store.jsonl.snapshot").exists());
    let store = AnnotationStore::open(&path, tasks.clone(), plan.clone(), opts).unwrap();
    assert_eq!(store.export(false), export);
    assert_eq!(store.sessions(), sessions.as_slice());

    let no_snapshot = StoreOptions {
        snapshot_every: 0,
        ..Default::default()
    };
    std::fs::remove_file(dir.path().join("store.jsonl.snapshot")).unwrap();
    let store = AnnotationStore::open(&path, tasks, plan, no_snapshot).unwrap();
    assert_eq!(store.export(false), export);
}
