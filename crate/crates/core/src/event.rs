//! Canonical event and run-state model.
//!
//! A run is observed as an ordered stream of [`MonitorEvent`]s. Folding that
//! stream with [`RunState::apply`] yields one [`TaskRecord`] per task (the
//! latest attempt; earlier attempts move to [`RunState::history`]) plus the
//! observed files and machines.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fsobserver::FileRecord;
use crate::nodemon::{NodeProfile, ResourceSample};
use crate::time::Timestamp;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Submitted,
    Started,
    Completed,
    Failed,
    Cached,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 5] = [
        TaskStatus::Submitted,
        TaskStatus::Started,
        TaskStatus::Completed,
        TaskStatus::Failed,
        TaskStatus::Cached,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Completed | TaskStatus::Failed | TaskStatus::Cached)
    }

    /// Whether `from -> to` is a legal lifecycle step. `None` is "no prior state".
    pub fn can_transition(from: Option<TaskStatus>, to: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (from, to),
            (None, Submitted) | (None, Cached) | (Some(Submitted), Started) | (Some(Started), Completed) | (Some(Started), Failed)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Submitted => "SUBMITTED",
            TaskStatus::Started => "STARTED",
            TaskStatus::Completed => "COMPLETED",
            TaskStatus::Failed => "FAILED",
            TaskStatus::Cached => "CACHED",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExecMethod {
    Local,
    Grid,
    Container,
    #[default]
    Unknown,
}

impl ExecMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecMethod::Local => "local",
            ExecMethod::Grid => "grid",
            ExecMethod::Container => "container",
            ExecMethod::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunStart,
    RunEnd,
    TaskSubmitted,
    TaskStarted,
    TaskCompleted,
    TaskFailed,
    TaskCached,
    FileObserved,
    NodeStatic,
    NodeSample,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::RunStart,
        EventKind::RunEnd,
        EventKind::TaskSubmitted,
        EventKind::TaskStarted,
        EventKind::TaskCompleted,
        EventKind::TaskFailed,
        EventKind::TaskCached,
        EventKind::FileObserved,
        EventKind::NodeStatic,
        EventKind::NodeSample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::RunStart => "run_start",
            EventKind::RunEnd => "run_end",
            EventKind::TaskSubmitted => "task_submitted",
            EventKind::TaskStarted => "task_started",
            EventKind::TaskCompleted => "task_completed",
            EventKind::TaskFailed => "task_failed",
            EventKind::TaskCached => "task_cached",
            EventKind::FileObserved => "file_observed",
            EventKind::NodeStatic => "node_static",
            EventKind::NodeSample => "node_sample",
        }
    }

    pub fn from_name(s: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Status a task event moves its task into, if this is a task event.
    pub fn target_status(self) -> Option<TaskStatus> {
        match self {
            EventKind::TaskSubmitted => Some(TaskStatus::Submitted),
            EventKind::TaskStarted => Some(TaskStatus::Started),
            EventKind::TaskCompleted => Some(TaskStatus::Completed),
            EventKind::TaskFailed => Some(TaskStatus::Failed),
            EventKind::TaskCached => Some(TaskStatus::Cached),
            _ => None,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Task fields carried by a task lifecycle event. Absent fields leave the
/// accumulated record untouched.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskPayload {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_method: Option<ExecMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

impl TaskPayload {
    pub fn new(id: impl Into<String>) -> Self {
        TaskPayload { id: id.into(), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSampleRecord {
    pub hostname: String,
    pub sample: ResourceSample,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    None,
    Task(TaskPayload),
    File(FileRecord),
    NodeStatic(NodeProfile),
    NodeSample(NodeSampleRecord),
}

impl Payload {
    fn matches(&self, kind: EventKind) -> bool {
        match self {
            Payload::None => matches!(kind, EventKind::RunStart | EventKind::RunEnd),
            Payload::Task(_) => kind.target_status().is_some(),
            Payload::File(_) => kind == EventKind::FileObserved,
            Payload::NodeStatic(_) => kind == EventKind::NodeStatic,
            Payload::NodeSample(_) => kind == EventKind::NodeSample,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorEvent {
    pub schema_version: u32,
    pub kind: EventKind,
    pub timestamp: Timestamp,
    pub run_id: String,
    pub payload: Payload,
}

impl MonitorEvent {
    pub fn new(kind: EventKind, timestamp: Timestamp, run_id: impl Into<String>, payload: Payload) -> Self {
        MonitorEvent { schema_version: SCHEMA_VERSION, kind, timestamp, run_id: run_id.into(), payload }
    }

    pub fn run(kind: EventKind, timestamp: Timestamp, run_id: impl Into<String>) -> Self {
        Self::new(kind, timestamp, run_id, Payload::None)
    }

    pub fn task(kind: EventKind, timestamp: Timestamp, run_id: impl Into<String>, task: TaskPayload) -> Self {
        Self::new(kind, timestamp, run_id, Payload::Task(task))
    }

    pub fn payload_matches_kind(&self) -> bool {
        self.payload.matches(self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EventError {
    #[error("illegal transition for task {task_id}: {from} -> {kind}", from = from.map(|s| s.as_str()).unwrap_or("<none>"))]
    IllegalTransition { task_id: String, from: Option<TaskStatus>, kind: EventKind },
    #[error("run id mismatch: state is {expected}, event is {found}")]
    RunMismatch { expected: String, found: String },
    #[error("unknown schema version {0}")]
    UnknownSchemaVersion(u32),
    #[error("payload does not match event kind {0}")]
    PayloadMismatch(EventKind),
}

/// Accumulated execution record of one task attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub name: String,
    pub attempt: u32,
    pub status: TaskStatus,
    pub submit_time: Option<Timestamp>,
    pub start_time: Option<Timestamp>,
    pub end_time: Option<Timestamp>,
    /// Whole milliseconds; present only when both start and end are known
    /// and end is not before start.
    pub duration_ms: Option<u64>,
    pub machine: Option<String>,
    pub exec_method: ExecMethod,
    pub container_image: Option<String>,
    pub workdir: Option<String>,
    pub parents: Vec<String>,
    pub exit_code: Option<i32>,
    /// Paths of files observed for this task.
    pub files: Vec<String>,
    /// Opaque extra columns carried over from trace tables.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, String>,
}

impl TaskRecord {
    pub fn new(task_id: impl Into<String>, status: TaskStatus) -> Self {
        let task_id = task_id.into();
        TaskRecord {
            name: task_id.clone(),
            task_id,
            attempt: 0,
            status,
            submit_time: None,
            start_time: None,
            end_time: None,
            duration_ms: None,
            machine: None,
            exec_method: ExecMethod::Unknown,
            container_image: None,
            workdir: None,
            parents: Vec::new(),
            exit_code: None,
            files: Vec::new(),
            extras: BTreeMap::new(),
        }
    }

    pub fn duration_s(&self) -> Option<f64> {
        self.duration_ms.map(|ms| ms as f64 / 1000.0)
    }

    /// Duration as derived from the stored timestamps.
    pub fn computed_duration_ms(&self) -> Option<u64> {
        match (self.start_time, self.end_time) {
            (Some(s), Some(e)) => u64::try_from(e.millis_since(s)).ok(),
            _ => None,
        }
    }

    fn recompute_duration(&mut self) {
        self.duration_ms = self.computed_duration_ms();
    }

    /// Add parents, dropping duplicates and self references.
    pub fn add_parents<'a>(&mut self, parents: impl IntoIterator<Item = &'a String>) {
        for p in parents {
            if *p != self.task_id && !self.parents.contains(p) {
                self.parents.push(p.clone());
            }
        }
    }

    fn merge_payload(&mut self, p: &TaskPayload) {
        if let Some(name) = &p.name {
            self.name = name.clone();
        }
        if let Some(m) = &p.machine {
            self.machine = Some(m.clone());
        }
        if let Some(e) = p.exec_method {
            self.exec_method = e;
        }
        if let Some(c) = &p.container_image {
            self.container_image = Some(c.clone());
        }
        if let Some(w) = &p.workdir {
            self.workdir = Some(w.clone());
        }
        if let Some(code) = p.exit_code {
            self.exit_code = Some(code);
        }
        self.add_parents(&p.parents);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MachineState {
    /// `None` while no static profile has been observed (unknown profile).
    pub profile: Option<NodeProfile>,
    pub samples: Vec<ResourceSample>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub started_at: Option<Timestamp>,
    pub ended_at: Option<Timestamp>,
    /// Latest attempt of each task.
    pub tasks: BTreeMap<String, TaskRecord>,
    /// Superseded attempts, oldest first.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub history: BTreeMap<String, Vec<TaskRecord>>,
    pub machines: BTreeMap<String, MachineState>,
    /// path -> task id -> record
    pub files: BTreeMap<String, BTreeMap<String, FileRecord>>,
    pub event_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub makespan_s: f64,
    pub makespan_ms: u64,
    pub task_counts: BTreeMap<TaskStatus, usize>,
    pub machine_count: usize,
}

impl RunState {
    pub fn new(run_id: impl Into<String>) -> Self {
        RunState { run_id: run_id.into(), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.run_id.is_empty() && self.event_count == 0
    }

    /// Fold a whole event sequence. On failure returns the index of the
    /// offending event.
    pub fn fold<'a>(events: impl IntoIterator<Item = &'a MonitorEvent>) -> Result<RunState, (usize, EventError)> {
        let mut state = RunState::default();
        for (i, ev) in events.into_iter().enumerate() {
            state.apply(ev).map_err(|e| (i, e))?;
        }
        Ok(state)
    }

    /// Apply one event in place. On error the state is left unchanged.
    pub fn apply(&mut self, ev: &MonitorEvent) -> Result<(), EventError> {
        if ev.schema_version != SCHEMA_VERSION {
            return Err(EventError::UnknownSchemaVersion(ev.schema_version));
        }
        if !ev.payload_matches_kind() {
            return Err(EventError::PayloadMismatch(ev.kind));
        }
        if !self.is_empty() && !self.run_id.is_empty() && self.run_id != ev.run_id {
            return Err(EventError::RunMismatch { expected: self.run_id.clone(), found: ev.run_id.clone() });
        }

        match &ev.payload {
            Payload::None => match ev.kind {
                EventKind::RunStart => {
                    self.started_at.get_or_insert(ev.timestamp);
                }
                _ => self.ended_at = Some(ev.timestamp),
            },
            Payload::Task(task) => self.apply_task(ev, task)?,
            Payload::File(file) => {
                self.files.entry(file.path.clone()).or_default().insert(file.task_id.clone(), file.clone());
                if let Some(rec) = self.tasks.get_mut(&file.task_id) {
                    if !rec.files.contains(&file.path) {
                        rec.files.push(file.path.clone());
                    }
                }
            }
            Payload::NodeStatic(profile) => {
                self.machines.entry(profile.hostname.clone()).or_default().profile = Some(profile.clone());
            }
            Payload::NodeSample(rec) => {
                let machine = self.machines.entry(rec.hostname.clone()).or_default();
                if machine.samples.last() != Some(&rec.sample) {
                    machine.samples.push(rec.sample.clone());
                }
            }
        }

        if self.run_id.is_empty() {
            self.run_id = ev.run_id.clone();
        }
        self.event_count += 1;
        Ok(())
    }

    fn apply_task(&mut self, ev: &MonitorEvent, task: &TaskPayload) -> Result<(), EventError> {
        let target = ev.kind.target_status().expect("task payload checked against kind");
        let illegal = |from: Option<TaskStatus>| EventError::IllegalTransition {
            task_id: task.id.clone(),
            from,
            kind: ev.kind,
        };
        let current = self.tasks.get(&task.id);

        // Decide whether this event starts a fresh attempt, continues the
        // current one, or is an idempotent re-delivery.
        let fresh_attempt = match current {
            None => {
                if !TaskStatus::can_transition(None, target) {
                    return Err(illegal(None));
                }
                Some(task.attempt.unwrap_or(0))
            }
            Some(rec) => {
                let attempt = task.attempt.unwrap_or(rec.attempt);
                if attempt > rec.attempt {
                    if !rec.status.is_terminal() || !TaskStatus::can_transition(None, target) {
                        return Err(illegal(Some(rec.status)));
                    }
                    Some(attempt)
                } else if attempt < rec.attempt {
                    return Err(illegal(Some(rec.status)));
                } else if rec.status == target && target.is_terminal() {
                    let same_end = target == TaskStatus::Cached || rec.end_time == Some(ev.timestamp);
                    let same_code = task.exit_code.is_none() || task.exit_code == rec.exit_code;
                    if same_end && same_code {
                        return Ok(());
                    }
                    return Err(illegal(Some(rec.status)));
                } else if TaskStatus::can_transition(Some(rec.status), target) {
                    None
                } else {
                    return Err(illegal(Some(rec.status)));
                }
            }
        };

        let mut rec = match fresh_attempt {
            Some(attempt) => {
                let mut r = TaskRecord::new(task.id.clone(), target);
                r.attempt = attempt;
                r
            }
            None => current.cloned().expect("continuing an existing record"),
        };
        rec.status = target;
        rec.merge_payload(task);
        match target {
            TaskStatus::Submitted => rec.submit_time = Some(ev.timestamp),
            TaskStatus::Started => rec.start_time = Some(ev.timestamp),
            TaskStatus::Completed | TaskStatus::Failed => rec.end_time = Some(ev.timestamp),
            TaskStatus::Cached => {}
        }
        rec.recompute_duration();
        for (path, by_task) in &self.files {
            if by_task.contains_key(&rec.task_id) && !rec.files.contains(path) {
                rec.files.push(path.clone());
            }
        }

        if let Some(m) = &rec.machine {
            self.machines.entry(m.clone()).or_default();
        }
        if fresh_attempt.is_some() {
            if let Some(prev) = self.tasks.remove(&task.id) {
                self.history.entry(task.id.clone()).or_default().push(prev);
            }
        }
        self.tasks.insert(task.id.clone(), rec);
        Ok(())
    }

    /// Makespan in milliseconds: latest end minus earliest start over tasks
    /// carrying both timestamps; 0 when there are none.
    pub fn makespan_ms(&self) -> u64 {
        makespan_ms(self.tasks.values())
    }

    pub fn summary(&self) -> RunSummary {
        finalize_run(self)
    }

    /// All file records, ordered by path then task id.
    pub fn file_records(&self) -> impl Iterator<Item = &FileRecord> {
        self.files.values().flat_map(|m| m.values())
    }
}

pub(crate) fn makespan_ms<'a>(tasks: impl IntoIterator<Item = &'a TaskRecord>) -> u64 {
    let mut lo: Option<Timestamp> = None;
    let mut hi: Option<Timestamp> = None;
    for t in tasks {
        if let (Some(s), Some(e)) = (t.start_time, t.end_time) {
            lo = Some(lo.map_or(s, |l| l.min(s)));
            hi = Some(hi.map_or(e, |h| h.max(e)));
        }
    }
    match (lo, hi) {
        (Some(l), Some(h)) => u64::try_from(h.millis_since(l)).unwrap_or(0),
        _ => 0,
    }
}

/// Pure single-event step: returns the updated state and leaves `state` as is.
pub fn apply_event(state: &RunState, ev: &MonitorEvent) -> Result<RunState, EventError> {
    let mut next = state.clone();
    next.apply(ev)?;
    Ok(next)
}

pub fn finalize_run(state: &RunState) -> RunSummary {
    let mut task_counts: BTreeMap<TaskStatus, usize> = TaskStatus::ALL.iter().map(|s| (*s, 0)).collect();
    for t in state.tasks.values() {
        *task_counts.entry(t.status).or_default() += 1;
    }
    let makespan_ms = state.makespan_ms();
    RunSummary {
        makespan_s: makespan_ms as f64 / 1000.0,
        makespan_ms,
        task_counts,
        machine_count: state.machines.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, ms: i64, id: &str) -> MonitorEvent {
        MonitorEvent::task(kind, Timestamp::from_millis(ms), "r1", TaskPayload::new(id))
    }

    #[test]
    fn submitted_then_started() {
        let s = RunState::fold(&[ev(EventKind::TaskSubmitted, 0, "t1"), ev(EventKind::TaskStarted, 1, "t1")]).unwrap();
        assert_eq!(s.tasks["t1"].status, TaskStatus::Started);
        assert_eq!(s.event_count, 2);
    }

    #[test]
    fn duration_from_timestamps() {
        let s = RunState::fold(&[
            ev(EventKind::TaskSubmitted, 9_000, "t1"),
            ev(EventKind::TaskStarted, 10_000, "t1"),
            ev(EventKind::TaskCompleted, 12_500, "t1"),
        ])
        .unwrap();
        assert_eq!(s.tasks["t1"].duration_s(), Some(2.5));
    }

    #[test]
    fn start_without_submit_is_illegal() {
        let err = apply_event(&RunState::default(), &ev(EventKind::TaskStarted, 0, "t9")).unwrap_err();
        assert!(matches!(err, EventError::IllegalTransition { ref task_id, from: None, .. } if task_id == "t9"));
    }

    #[test]
    fn completed_before_started_is_illegal_and_state_untouched() {
        let s = RunState::fold(&[ev(EventKind::TaskSubmitted, 0, "t1")]).unwrap();
        let before = s.clone();
        assert!(apply_event(&s, &ev(EventKind::TaskCompleted, 5, "t1")).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn foreign_run_and_version() {
        let s = RunState::fold(&[ev(EventKind::TaskSubmitted, 0, "t1")]).unwrap();
        let mut foreign = ev(EventKind::TaskSubmitted, 0, "t2");
        foreign.run_id = "other".into();
        assert!(matches!(apply_event(&s, &foreign), Err(EventError::RunMismatch { .. })));
        let mut v2 = ev(EventKind::TaskSubmitted, 0, "t2");
        v2.schema_version = 2;
        assert_eq!(apply_event(&s, &v2), Err(EventError::UnknownSchemaVersion(2)));
    }

    #[test]
    fn payload_must_match_kind() {
        let bad = MonitorEvent::run(EventKind::TaskStarted, Timestamp::EPOCH, "r1");
        assert_eq!(apply_event(&RunState::default(), &bad), Err(EventError::PayloadMismatch(EventKind::TaskStarted)));
    }

    #[test]
    fn terminal_redelivery_is_idempotent() {
        let events = [
            ev(EventKind::TaskSubmitted, 0, "t1"),
            ev(EventKind::TaskStarted, 1, "t1"),
            ev(EventKind::TaskCompleted, 2, "t1"),
            ev(EventKind::TaskCompleted, 2, "t1"),
        ];
        let s = RunState::fold(&events).unwrap();
        assert_eq!(s.event_count, 4);
        assert_eq!(s.summary().task_counts[&TaskStatus::Completed], 1);
        // A conflicting terminal event is not a re-delivery.
        assert!(apply_event(&s, &ev(EventKind::TaskCompleted, 3, "t1")).is_err());
        assert!(apply_event(&s, &ev(EventKind::TaskFailed, 2, "t1")).is_err());
    }

    #[test]
    fn out_of_order_timestamps_are_kept_verbatim() {
        let s = RunState::fold(&[
            ev(EventKind::TaskSubmitted, 100, "t1"),
            ev(EventKind::TaskStarted, 50, "t1"),
            ev(EventKind::TaskCompleted, 40, "t1"),
        ])
        .unwrap();
        let t = &s.tasks["t1"];
        assert_eq!(t.start_time, Some(Timestamp::from_millis(50)));
        assert_eq!(t.end_time, Some(Timestamp::from_millis(40)));
        assert_eq!(t.duration_ms, None);
    }

    #[test]
    fn retry_creates_fresh_attempt() {
        let mut resubmit = ev(EventKind::TaskSubmitted, 10, "t1");
        if let Payload::Task(p) = &mut resubmit.payload {
            p.attempt = Some(1);
        }
        let s = RunState::fold(&[
            ev(EventKind::TaskSubmitted, 0, "t1"),
            ev(EventKind::TaskStarted, 1, "t1"),
            ev(EventKind::TaskFailed, 2, "t1"),
            resubmit.clone(),
            ev(EventKind::TaskStarted, 11, "t1"),
        ])
        .unwrap();
        assert_eq!(s.tasks["t1"].attempt, 1);
        assert_eq!(s.tasks["t1"].status, TaskStatus::Started);
        assert_eq!(s.history["t1"].len(), 1);
        assert_eq!(s.history["t1"][0].status, TaskStatus::Failed);

        // Retrying a task that has not finished is illegal.
        let running = RunState::fold(&[ev(EventKind::TaskSubmitted, 0, "t1")]).unwrap();
        assert!(apply_event(&running, &resubmit).is_err());
    }

    #[test]
    fn cached_only_from_nothing() {
        let s = RunState::fold(&[ev(EventKind::TaskCached, 0, "t1")]).unwrap();
        assert_eq!(s.tasks["t1"].status, TaskStatus::Cached);
        assert_eq!(s.tasks["t1"].end_time, None);
        let s2 = RunState::fold(&[ev(EventKind::TaskSubmitted, 0, "t2")]).unwrap();
        assert!(apply_event(&s2, &ev(EventKind::TaskCached, 1, "t2")).is_err());
    }

    #[test]
    fn parents_deduplicated_without_self() {
        let mut p = TaskPayload::new("t1");
        p.parents = vec!["a".into(), "t1".into(), "a".into(), "b".into()];
        let s = RunState::fold(&[MonitorEvent::task(EventKind::TaskSubmitted, Timestamp::EPOCH, "r1", p)]).unwrap();
        assert_eq!(s.tasks["t1"].parents, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn machine_reference_registers_unknown_profile() {
        let mut p = TaskPayload::new("t1");
        p.machine = Some("n1".into());
        let s = RunState::fold(&[MonitorEvent::task(EventKind::TaskSubmitted, Timestamp::EPOCH, "r1", p)]).unwrap();
        assert_eq!(s.machines["n1"].profile, None);
    }

    #[test]
    fn summary_of_empty_state() {
        let sum = finalize_run(&RunState::default());
        assert_eq!(sum.makespan_s, 0.0);
        assert!(sum.task_counts.values().all(|&c| c == 0));
        assert_eq!(sum.machine_count, 0);
    }

    #[test]
    fn makespan_is_max_end_minus_min_start() {
        let s = RunState::fold(&[
            ev(EventKind::TaskSubmitted, 0, "a"),
            ev(EventKind::TaskStarted, 0, "a"),
            ev(EventKind::TaskSubmitted, 0, "b"),
            ev(EventKind::TaskStarted, 3_000, "b"),
            ev(EventKind::TaskCompleted, 5_000, "a"),
            ev(EventKind::TaskCompleted, 9_000, "b"),
        ])
        .unwrap();
        assert_eq!(finalize_run(&s).makespan_s, 9.0);
    }
}
