use proptest::prelude::*;

use wfmon_core::event::{apply_event, EventError, EventKind, MonitorEvent, RunState, TaskPayload, TaskStatus};
use wfmon_core::simulator::{generate_run, SimConfig};
use wfmon_core::time::Timestamp;

fn lifecycle(task: &str, outcome: EventKind, t0: i64) -> Vec<MonitorEvent> {
    let ev = |kind, dt| MonitorEvent::task(kind, Timestamp::from_millis(t0 + dt), "r", TaskPayload::new(task));
    if outcome == EventKind::TaskCached {
        return vec![ev(EventKind::TaskCached, 0)];
    }
    vec![ev(EventKind::TaskSubmitted, 0), ev(EventKind::TaskStarted, 5), ev(outcome, 17)]
}

fn outcome() -> impl Strategy<Value = EventKind> {
    prop_oneof![Just(EventKind::TaskCompleted), Just(EventKind::TaskFailed), Just(EventKind::TaskCached)]
}

/// Kind order of one task's accepted events must be a prefix of a legal
/// lifecycle.
fn legal_prefix(kinds: &[EventKind]) -> bool {
    let mut status: Option<TaskStatus> = None;
    for k in kinds {
        let target = k.target_status().unwrap();
        if !TaskStatus::can_transition(status, target) {
            return false;
        }
        status = Some(target);
    }
    true
}

proptest! {
    #[test]
    fn shuffled_streams_never_corrupt_state(
        outcomes in proptest::collection::vec(outcome(), 1..5),
        order in proptest::collection::vec(any::<u32>(), 0..20),
    ) {
        let mut events: Vec<MonitorEvent> = Vec::new();
        for (i, o) in outcomes.iter().enumerate() {
            events.extend(lifecycle(&format!("t{i}"), *o, 1000 * i as i64));
        }
        // Deterministic shuffle driven by the generated keys.
        let mut keyed: Vec<(u32, MonitorEvent)> =
            events.into_iter().enumerate().map(|(i, e)| (order.get(i).copied().unwrap_or(i as u32), e)).collect();
        keyed.sort_by_key(|(k, _)| *k);

        let mut state = RunState::default();
        let mut accepted: std::collections::BTreeMap<String, Vec<EventKind>> = Default::default();
        for (_, ev) in &keyed {
            let before = state.clone();
            match apply_event(&state, ev) {
                Ok(next) => {
                    let id = match &ev.payload { wfmon_core::Payload::Task(t) => t.id.clone(), _ => unreachable!() };
                    accepted.entry(id).or_default().push(ev.kind);
                    state = next;
                }
                Err(EventError::IllegalTransition { .. }) => prop_assert_eq!(&state, &before),
                Err(other) => prop_assert!(false, "unexpected error {other}"),
            }
            for rec in state.tasks.values() {
                prop_assert_eq!(rec.duration_ms, rec.computed_duration_ms());
            }
        }
        for kinds in accepted.values() {
            prop_assert!(legal_prefix(kinds));
        }
    }

    #[test]
    fn stepwise_and_batch_fold_agree(seed in 0u64..500, n in 0usize..12, split in 0usize..200) {
        let cfg = SimConfig { seed, task_count: n, failure_rate: 0.3, ..Default::default() };
        let events = generate_run(&cfg);
        let batch = RunState::fold(&events).unwrap();

        let mut stepwise = RunState::default();
        for ev in &events {
            stepwise = apply_event(&stepwise, ev).unwrap();
        }
        prop_assert_eq!(&stepwise, &batch);

        // Folding a prefix then continuing from it is the same as one fold.
        let cut = split.min(events.len());
        let mut resumed = RunState::fold(&events[..cut]).unwrap();
        for ev in &events[cut..] {
            resumed.apply(ev).unwrap();
        }
        prop_assert_eq!(serde_json::to_string(&resumed).unwrap(), serde_json::to_string(&batch).unwrap());
    }

    #[test]
    fn stored_duration_matches_timestamps(start in 0i64..1_000_000, len in -5_000i64..5_000) {
        let mut state = RunState::default();
        let ev = |kind, ms| MonitorEvent::task(kind, Timestamp::from_millis(ms), "r", TaskPayload::new("a"));
        state.apply(&ev(EventKind::TaskSubmitted, start)).unwrap();
        state.apply(&ev(EventKind::TaskStarted, start)).unwrap();
        state.apply(&ev(EventKind::TaskCompleted, start + len)).unwrap();
        let rec = &state.tasks["a"];
        prop_assert_eq!(rec.duration_ms, rec.computed_duration_ms());
        prop_assert_eq!(rec.duration_ms, u64::try_from(len).ok());
    }
}
