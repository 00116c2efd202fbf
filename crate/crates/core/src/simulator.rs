//! Deterministic synthetic runs.
//!
//! The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`, so
//! a config produces the same stream on every platform. The plan (DAG,
//! durations, placement, file traffic) is built first; events and the
//! reference answers are both read off the plan, never off the graph module.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::event::{EventKind, ExecMethod, MonitorEvent, NodeSampleRecord, Payload, TaskPayload};
use crate::fsobserver::{FileRecord, FileRole};
use crate::nodemon::{Nic, NodeProfile, ResourceSample};
use crate::time::Timestamp;

/// 2025-01-01T00:00:00Z
pub const BASE_TIME: Timestamp = Timestamp::from_millis(1_735_689_600_000);

const MAX_QUEUE_DELAY_MS: u64 = 2_000;
const EXTRA_INPUT_PROBABILITY: f64 = 0.2;
const CONTAINER_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DagShape {
    Chain,
    ForkJoin,
    LayeredRandom,
}

impl std::str::FromStr for DagShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(DagShape::Chain),
            "fork-join" => Ok(DagShape::ForkJoin),
            "layered-random" => Ok(DagShape::LayeredRandom),
            other => Err(format!("unknown DAG shape {other:?} (chain, fork-join, layered-random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub task_count: usize,
    pub machine_count: usize,
    pub dag_shape: DagShape,
    /// Inclusive bounds on task duration in seconds; drawn at millisecond
    /// resolution.
    pub duration_range_s: (f64, f64),
    pub files_per_task: (u32, u32),
    pub failure_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 42,
            task_count: 20,
            machine_count: 4,
            dag_shape: DagShape::LayeredRandom,
            duration_range_s: (1.0, 60.0),
            files_per_task: (1, 3),
            failure_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimConfigError {
    #[error("machine_count must be positive")]
    NoMachines,
    #[error("duration range must satisfy 0 <= min <= max")]
    DurationRange,
    #[error("files_per_task must satisfy min <= max")]
    FileRange,
    #[error("failure_rate must lie in [0, 1]")]
    FailureRate,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        if self.machine_count == 0 {
            return Err(SimConfigError::NoMachines);
        }
        let (lo, hi) = self.duration_range_s;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(SimConfigError::DurationRange);
        }
        if self.files_per_task.0 > self.files_per_task.1 {
            return Err(SimConfigError::FileRange);
        }
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(SimConfigError::FailureRate);
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        format!("sim-{}", self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnswers {
    pub makespan_ms: u64,
    pub makespan_s: f64,
    pub critical_path_length_ms: u64,
    pub critical_path_length_s: f64,
    pub edge_count: usize,
}

#[derive(Debug, Clone)]
struct PlannedFile {
    path: String,
    size_bytes: u64,
}

#[derive(Debug, Clone)]
struct PlannedTask {
    id: String,
    name: String,
    parents: Vec<usize>,
    /// Non-parent tasks whose outputs this task reads.
    extra_producers: Vec<usize>,
    machine: usize,
    submit_ms: u64,
    start_ms: u64,
    end_ms: u64,
    failed: bool,
    container: Option<String>,
    outputs: Vec<PlannedFile>,
    /// (producer index, file index in producer's outputs)
    inputs: Vec<(usize, usize)>,
}

impl PlannedTask {
    fn workdir(&self) -> String {
        format!("/work/{}", self.id)
    }

    fn producers(&self) -> BTreeSet<usize> {
        self.inputs.iter().map(|(p, _)| *p).collect()
    }
}

struct Plan {
    tasks: Vec<PlannedTask>,
    machines: Vec<String>,
}

fn task_id(i: usize) -> String {
    format!("t{i:04}")
}

fn machine_id(k: usize) -> String {
    format!("node-{:02}", k + 1)
}

fn dag(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<(Vec<usize>, usize)> {
    let n = cfg.task_count;
    match cfg.dag_shape {
        DagShape::Chain => (0..n).map(|i| (if i == 0 { vec![] } else { vec![i - 1] }, i)).collect(),
        DagShape::ForkJoin => (0..n)
            .map(|i| match i {
                0 => (vec![], 0),
                _ if i + 1 == n && n > 2 => ((1..i).collect(), 2),
                _ => (vec![0], 1),
            })
            .collect(),
        DagShape::LayeredRandom => {
            let max_width = ((n as f64).sqrt().ceil() as usize).max(1);
            let mut out = Vec::with_capacity(n);
            let mut prev: Vec<usize> = Vec::new();
            let mut layer = 0;
            while out.len() < n {
                let width = rng.random_range(1..=max_width).min(n - out.len());
                let mut current = Vec::with_capacity(width);
                for _ in 0..width {
                    let i = out.len();
                    let parents = if prev.is_empty() {
                        vec![]
                    } else {
                        let k = rng.random_range(1..=prev.len().min(3));
                        let mut pool = prev.clone();
                        let mut chosen = BTreeSet::new();
                        for _ in 0..k {
                            chosen.insert(pool.swap_remove(rng.random_range(0..pool.len())));
                        }
                        chosen.into_iter().collect()
                    };
                    out.push((parents, layer));
                    current.push(i);
                }
                prev = current;
                layer += 1;
            }
            out
        }
    }
}

fn plan(cfg: &SimConfig) -> Plan {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let machines: Vec<String> = (0..cfg.machine_count).map(machine_id).collect();
    let shape = dag(cfg, &mut rng);
    let dur_lo = (cfg.duration_range_s.0 * 1000.0).round() as u64;
    let dur_hi = (cfg.duration_range_s.1 * 1000.0).round() as u64;
    let base = BASE_TIME.as_millis() as u64;

    let mut machine_free = vec![base; cfg.machine_count];
    let mut tasks: Vec<PlannedTask> = Vec::with_capacity(cfg.task_count);
    for (i, (parents, layer)) in shape.into_iter().enumerate() {
        let id = task_id(i);
        let machine = if i < cfg.machine_count { i } else { rng.random_range(0..cfg.machine_count) };

        let mut inputs = Vec::new();
        for &p in &parents {
            inputs.extend((0..tasks[p].outputs.len()).map(|f| (p, f)));
        }
        let mut extra_producers = Vec::new();
        if i > 0 && rng.random_bool(EXTRA_INPUT_PROBABILITY) {
            let j = rng.random_range(0..i);
            if !parents.contains(&j) && !tasks[j].outputs.is_empty() {
                let f = rng.random_range(0..tasks[j].outputs.len());
                inputs.push((j, f));
                extra_producers.push(j);
            }
        }

        let ready = parents.iter().chain(&extra_producers).map(|&p| tasks[p].end_ms).max().unwrap_or(base);
        let start = ready.max(machine_free[machine]) + rng.random_range(0..=MAX_QUEUE_DELAY_MS);
        let end = start + rng.random_range(dur_lo..=dur_hi);
        machine_free[machine] = end;
        let failed = rng.random_bool(cfg.failure_rate);
        let container = rng.random_bool(CONTAINER_PROBABILITY).then(|| format!("example/step{layer}:1.0"));
        let n_out = if failed { 0 } else { rng.random_range(cfg.files_per_task.0..=cfg.files_per_task.1) };
        let outputs = (0..n_out)
            .map(|k| PlannedFile { path: format!("/work/{id}/out_{k}.dat"), size_bytes: rng.random_range(1..=1 << 20) })
            .collect();

        tasks.push(PlannedTask {
            id,
            name: format!("STEP_{layer}"),
            parents,
            extra_producers,
            machine,
            submit_ms: ready,
            start_ms: start,
            end_ms: end,
            failed,
            container,
            outputs,
            inputs,
        });
    }
    Plan { tasks, machines }
}

fn ts(ms: u64) -> Timestamp {
    Timestamp::from_millis(ms as i64)
}

/// Ordered event stream for `cfg`. Panics on an invalid config; call
/// [`SimConfig::validate`] first for a recoverable error.
pub fn generate_run(cfg: &SimConfig) -> Vec<MonitorEvent> {
    cfg.validate().expect("valid simulator config");
    let run_id = cfg.run_id();
    let p = plan(cfg);
    let base = BASE_TIME.as_millis() as u64;
    let end = p.tasks.iter().map(|t| t.end_ms).max().unwrap_or(base);

    // (timestamp, group, task index, step) orders events causally: at equal
    // timestamps lower-indexed tasks (all producers) go first.
    let mut keyed: Vec<((u64, u8, usize, u8), MonitorEvent)> = Vec::new();
    keyed.push(((base, 0, 0, 0), MonitorEvent::run(EventKind::RunStart, ts(base), &run_id)));
    if !p.tasks.is_empty() {
        for (k, m) in p.machines.iter().enumerate() {
            let profile = NodeProfile {
                hostname: m.clone(),
                ip_addresses: vec![format!("10.0.0.{}", k + 1)],
                cpu_model: Some("Simulated CPU @ 2.40GHz".into()),
                core_count: 16,
                ram_bytes: 64 << 30,
                nics: vec![Nic { name: "eth0".into(), mac: Some(format!("02:00:00:00:00:{:02x}", k + 1)), speed_mbps: Some(10_000), up: true }],
            };
            keyed.push(((base, 1, k, 0), MonitorEvent::new(EventKind::NodeStatic, ts(base), &run_id, Payload::NodeStatic(profile))));
        }
    }

    for (i, t) in p.tasks.iter().enumerate() {
        let mut submitted = TaskPayload::new(&t.id);
        submitted.name = Some(t.name.clone());
        submitted.attempt = Some(0);
        submitted.parents = t.parents.iter().map(|&q| p.tasks[q].id.clone()).collect();
        submitted.workdir = Some(t.workdir());
        submitted.exec_method = Some(if t.container.is_some() { ExecMethod::Container } else { ExecMethod::Local });
        submitted.container_image = t.container.clone();
        keyed.push(((t.submit_ms, 2, i, 0), MonitorEvent::task(EventKind::TaskSubmitted, ts(t.submit_ms), &run_id, submitted)));

        let mut started = TaskPayload::new(&t.id);
        started.machine = Some(p.machines[t.machine].clone());
        keyed.push(((t.start_ms, 2, i, 1), MonitorEvent::task(EventKind::TaskStarted, ts(t.start_ms), &run_id, started)));

        for &(q, f) in &t.inputs {
            let src = &p.tasks[q].outputs[f];
            let name = src.path.rsplit('/').next().expect("non-empty path");
            let rec = FileRecord {
                path: format!("{}/{}_{name}", t.workdir(), p.tasks[q].id),
                size_bytes: src.size_bytes,
                mtime: ts(p.tasks[q].end_ms),
                checksum: None,
                role: FileRole::Input,
                task_id: t.id.clone(),
                link_target: Some(src.path.clone()),
            };
            keyed.push(((t.start_ms, 2, i, 2), MonitorEvent::new(EventKind::FileObserved, ts(t.start_ms), &run_id, Payload::File(rec))));
        }
        let log = PlannedFile { path: format!("{}/.command.log", t.workdir()), size_bytes: 128 };
        for (f, role) in t.outputs.iter().map(|f| (f, FileRole::Output)).chain([(&log, FileRole::Unknown)]) {
            let rec = FileRecord {
                path: f.path.clone(),
                size_bytes: f.size_bytes,
                mtime: ts(t.end_ms),
                checksum: None,
                role,
                task_id: t.id.clone(),
                link_target: None,
            };
            keyed.push(((t.end_ms, 2, i, 3), MonitorEvent::new(EventKind::FileObserved, ts(t.end_ms), &run_id, Payload::File(rec))));
        }

        let mut done = TaskPayload::new(&t.id);
        done.exit_code = Some(if t.failed { 1 } else { 0 });
        let kind = if t.failed { EventKind::TaskFailed } else { EventKind::TaskCompleted };
        keyed.push(((t.end_ms, 2, i, 4), MonitorEvent::task(kind, ts(t.end_ms), &run_id, done)));
    }

    if !p.tasks.is_empty() {
        for (k, m) in p.machines.iter().enumerate() {
            let busy_ms: u64 = p.tasks.iter().filter(|t| t.machine == k).map(|t| t.end_ms - t.start_ms).sum();
            let span = (end - base).max(1);
            let sample = ResourceSample {
                taken_at: ts(end),
                cpu_util: (busy_ms as f64 / span as f64).min(1.0),
                mem_used_bytes: (1 << 30) * (1 + k as u64),
                net_rx_bytes_per_s: 1.0e6,
                net_tx_bytes_per_s: 5.0e5,
            };
            let rec = NodeSampleRecord { hostname: m.clone(), sample };
            keyed.push(((end, 3, k, 0), MonitorEvent::new(EventKind::NodeSample, ts(end), &run_id, Payload::NodeSample(rec))));
        }
    }
    keyed.push(((end, 4, 0, 0), MonitorEvent::run(EventKind::RunEnd, ts(end), &run_id)));

    // Stable: same-key file records keep their generation order.
    keyed.sort_by_key(|(k, _)| *k);
    keyed.into_iter().map(|(_, e)| e).collect()
}

/// Makespan, critical path and edge count computed from the plan.
pub fn reference_answers(cfg: &SimConfig) -> ReferenceAnswers {
    cfg.validate().expect("valid simulator config");
    let p = plan(cfg);

    // Dependencies of each task: declared parents plus every task whose
    // output it reads.
    let deps: Vec<BTreeSet<usize>> =
        p.tasks.iter().map(|t| t.parents.iter().copied().chain(t.producers()).collect()).collect();
    let edge_count = deps.iter().map(BTreeSet::len).sum();

    // Tasks are planned in dependency order, so index order is topological.
    let mut heaviest = vec![0u64; p.tasks.len()];
    for (i, t) in p.tasks.iter().enumerate() {
        debug_assert!(deps[i].iter().all(|&d| d < i));
        debug_assert!(t.extra_producers.iter().all(|q| deps[i].contains(q)));
        let before = deps[i].iter().map(|&d| heaviest[d]).max().unwrap_or(0);
        heaviest[i] = before + (t.end_ms - t.start_ms);
    }
    let critical = heaviest.iter().copied().max().unwrap_or(0);

    let makespan = match (p.tasks.iter().map(|t| t.start_ms).min(), p.tasks.iter().map(|t| t.end_ms).max()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0,
    };

    ReferenceAnswers {
        makespan_ms: makespan,
        makespan_s: makespan as f64 / 1000.0,
        critical_path_length_ms: critical,
        critical_path_length_s: critical as f64 / 1000.0,
        edge_count,
    }
}

/// Machine each task runs on, from the plan.
pub fn planned_assignment(cfg: &SimConfig) -> BTreeMap<String, String> {
    let p = plan(cfg);
    p.tasks.iter().map(|t| (t.id.clone(), p.machines[t.machine].clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::RunState;
    use crate::ingest::events_to_jsonl;

    fn cfg(shape: DagShape, n: usize) -> SimConfig {
        SimConfig { task_count: n, dag_shape: shape, ..Default::default() }
    }

    #[test]
    fn empty_run() {
        let events = generate_run(&cfg(DagShape::Chain, 0));
        let kinds: Vec<EventKind> = events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::RunStart, EventKind::RunEnd]);
        let r = reference_answers(&cfg(DagShape::Chain, 0));
        assert_eq!((r.makespan_ms, r.critical_path_length_ms, r.edge_count), (0, 0, 0));
    }

    #[test]
    fn deterministic() {
        let c = cfg(DagShape::LayeredRandom, 30);
        assert_eq!(events_to_jsonl(&generate_run(&c)), events_to_jsonl(&generate_run(&c)));
        let other = SimConfig { seed: 43, ..c.clone() };
        assert_ne!(events_to_jsonl(&generate_run(&c)), events_to_jsonl(&generate_run(&other)));
    }

    #[test]
    fn streams_replay_cleanly() {
        for shape in [DagShape::Chain, DagShape::ForkJoin, DagShape::LayeredRandom] {
            for seed in 0..20 {
                let c = SimConfig { seed, failure_rate: 0.2, ..cfg(shape, 15) };
                let state = RunState::fold(&generate_run(&c)).unwrap();
                assert_eq!(state.tasks.len(), 15);
                assert!(state.tasks.values().all(|t| t.status.is_terminal()));
            }
        }
    }

    #[test]
    fn back_to_back_chain() {
        let c = SimConfig {
            task_count: 3,
            machine_count: 1,
            dag_shape: DagShape::Chain,
            duration_range_s: (2.0, 2.0),
            files_per_task: (0, 0),
            ..Default::default()
        };
        let r = reference_answers(&c);
        assert_eq!(r.critical_path_length_s, 6.0);
        assert_eq!(r.edge_count, 2);
    }

    #[test]
    fn all_machines_used() {
        let c = SimConfig { machine_count: 6, task_count: 50, ..Default::default() };
        let used: BTreeSet<String> = planned_assignment(&c).into_values().collect();
        assert_eq!(used.len(), 6);
    }

    #[test]
    fn config_validation() {
        assert_eq!(SimConfig { machine_count: 0, ..Default::default() }.validate(), Err(SimConfigError::NoMachines));
        assert_eq!(SimConfig { duration_range_s: (3.0, 1.0), ..Default::default() }.validate(), Err(SimConfigError::DurationRange));
        assert_eq!(SimConfig { files_per_task: (2, 1), ..Default::default() }.validate(), Err(SimConfigError::FileRange));
        assert_eq!(SimConfig { failure_rate: 1.5, ..Default::default() }.validate(), Err(SimConfigError::FailureRate));
        assert_eq!("fork-join".parse::<DagShape>(), Ok(DagShape::ForkJoin));
    }
}
