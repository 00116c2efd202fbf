//! Physical execution graph.
//!
//! Vertices are executed tasks; an edge `producer -> consumer` is backed by
//! an explicit parent declaration, by a file one task wrote and the other
//! read, or both. The graph is kept acyclic: any mutation that would close
//! a cycle is rejected and leaves the graph untouched.

mod critical;
mod export;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::event::{RunState, TaskRecord};
use crate::fsobserver::{FileRecord, FileRole};

pub use critical::{critical_path, longest_path_by, CriticalPathReport, LongestPath};
pub use export::{export_dot, export_gantt, GANTT_HEADER};

pub const UNASSIGNED: &str = "unassigned";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeSource {
    ExplicitParent,
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge {from} -> {to} would introduce a cycle")]
    CycleIntroduced { from: String, to: String },
    #[error("graph contains a cycle")]
    CyclicGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecGraph {
    vertices: BTreeMap<String, TaskRecord>,
    /// from -> to -> provenance labels
    edges: BTreeMap<String, BTreeMap<String, BTreeSet<EdgeSource>>>,
    /// declared parent not seen yet -> children waiting for it
    pending: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeriveReport {
    pub added: usize,
    /// File label attached to an already existing edge.
    pub merged: usize,
    pub skipped: Vec<GraphError>,
    /// Producer/consumer pairs naming a task that is not a vertex yet.
    pub unresolved: usize,
}

impl ExecGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Batch construction: insert every task of `state` in id order, then
    /// derive file edges. Rejected insertions and skipped edges are returned.
    pub fn from_state(state: &RunState) -> (ExecGraph, Vec<GraphError>) {
        let mut g = ExecGraph::new();
        let mut errors = Vec::new();
        for rec in state.tasks.values() {
            if let Err(e) = g.insert_task(rec.clone()) {
                errors.push(e);
            }
        }
        let files: Vec<FileRecord> = state.file_records().cloned().collect();
        errors.extend(g.derive_edges(&files).skipped);
        (g, errors)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeMap::len).sum()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vertices.contains_key(id)
    }

    pub fn task(&self, id: &str) -> Option<&TaskRecord> {
        self.vertices.get(id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskRecord> {
        self.vertices.values()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = &str> {
        self.vertices.keys().map(String::as_str)
    }

    /// `(from, to, labels)` in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, &BTreeSet<EdgeSource>)> {
        self.edges
            .iter()
            .flat_map(|(from, tos)| tos.iter().map(move |(to, labels)| (from.as_str(), to.as_str(), labels)))
    }

    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges().map(|(f, t, _)| (f.to_owned(), t.to_owned())).collect()
    }

    pub fn successors(&self, id: &str) -> impl Iterator<Item = &str> {
        self.edges.get(id).into_iter().flat_map(|m| m.keys().map(String::as_str))
    }

    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.edges().filter(|(_, t, _)| *t == id).map(|(f, _, _)| f).collect()
    }

    pub fn pending_parents(&self) -> impl Iterator<Item = &str> {
        self.pending.keys().map(String::as_str)
    }

    fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.get(from).is_some_and(|m| m.contains_key(to))
    }

    /// Whether `to` is reachable from `from` using existing edges plus `extra`.
    fn reaches(&self, from: &str, to: &str, extra: &[(String, String)]) -> bool {
        let mut stack = vec![from];
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if !seen.insert(v) {
                continue;
            }
            stack.extend(self.successors(v));
            stack.extend(extra.iter().filter(|(f, _)| f == v).map(|(_, t)| t.as_str()));
        }
        false
    }

    fn add_edge(&mut self, from: &str, to: &str, source: EdgeSource) {
        self.edges.entry(from.to_owned()).or_default().entry(to.to_owned()).or_default().insert(source);
    }

    /// Insert (or refresh) the vertex for `rec`.
    ///
    /// Edges from already-known parents are added now; unknown parents are
    /// remembered and their edges materialize when they arrive. If any new
    /// edge would close a cycle nothing is changed.
    pub fn insert_task(&mut self, rec: TaskRecord) -> Result<(), GraphError> {
        let id = rec.task_id.clone();
        let mut new_edges: Vec<(String, String)> = Vec::new();
        let mut waiting: Vec<String> = Vec::new();
        for p in &rec.parents {
            if *p == id {
                continue;
            }
            if self.contains(p) {
                if !self.has_edge(p, &id) {
                    new_edges.push((p.clone(), id.clone()));
                }
            } else {
                waiting.push(p.clone());
            }
        }
        if let Some(children) = self.pending.get(&id) {
            for c in children {
                if *c != id && self.contains(c) && !self.has_edge(&id, c) {
                    new_edges.push((id.clone(), c.clone()));
                }
            }
        }

        for (k, (from, to)) in new_edges.iter().enumerate() {
            if from == to || self.reaches(to, from, &new_edges[..k]) {
                return Err(GraphError::CycleIntroduced { from: from.clone(), to: to.clone() });
            }
        }

        // Existing explicit edges are kept even if the refreshed record
        // dropped a parent: the graph only grows.
        self.vertices.insert(id.clone(), rec);
        for (from, to) in &new_edges {
            self.add_edge(from, to, EdgeSource::ExplicitParent);
        }
        self.pending.remove(&id);
        for p in waiting {
            self.pending.entry(p).or_default().insert(id.clone());
        }
        Ok(())
    }

    /// Add producer -> consumer edges for every file written by one task and
    /// read by another. Cycle-closing edges are skipped and reported; the
    /// rest are applied.
    pub fn derive_edges(&mut self, files: &[FileRecord]) -> DeriveReport {
        let mut by_identity: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
        for f in files {
            let slot = by_identity.entry(f.identity()).or_default();
            match f.role {
                FileRole::Output => {
                    slot.0.insert(&f.task_id);
                }
                FileRole::Input => {
                    slot.1.insert(&f.task_id);
                }
                FileRole::Unknown => {}
            }
        }

        let mut report = DeriveReport::default();
        for (path, (producers, consumers)) in by_identity {
            for p in &producers {
                for c in &consumers {
                    if p == c {
                        continue;
                    }
                    if !self.contains(p) || !self.contains(c) {
                        report.unresolved += 1;
                        continue;
                    }
                    let label = EdgeSource::File { path: path.to_owned() };
                    if self.has_edge(p, c) {
                        let labels = self.edges.get_mut(*p).and_then(|m| m.get_mut(*c)).expect("edge present");
                        if labels.insert(label) {
                            report.merged += 1;
                        }
                    } else if self.reaches(c, p, &[]) {
                        report.skipped.push(GraphError::CycleIntroduced { from: p.to_string(), to: c.to_string() });
                    } else {
                        self.add_edge(p, c, label);
                        report.added += 1;
                    }
                }
            }
        }
        report
    }

    /// Kahn's algorithm with lexicographic tie-breaking.
    pub fn topological_order(&self) -> Result<Vec<String>, GraphError> {
        let mut indegree: BTreeMap<&str, usize> = self.vertices.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, to, _) in self.edges() {
            *indegree.entry(to).or_default() += 1;
        }
        let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(v, _)| *v).collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(v) = ready.pop_first() {
            order.push(v.to_owned());
            for s in self.successors(v) {
                let d = indegree.get_mut(s).expect("edge endpoint is a vertex");
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        if order.len() == indegree.len() {
            Ok(order)
        } else {
            Err(GraphError::CyclicGraph)
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Makespan in milliseconds over the vertices' timestamps.
    pub fn makespan_ms(&self) -> u64 {
        crate::event::makespan_ms(self.vertices.values())
    }

    /// Whether every vertex and edge of `self` is also in `other`.
    pub fn is_subgraph_of(&self, other: &ExecGraph) -> bool {
        self.vertices.keys().all(|v| other.contains(v)) && self.edges().all(|(f, t, _)| other.has_edge(f, t))
    }
}

/// Group tasks by machine (`unassigned` when none), each group ordered by
/// start time (untimed last) then task id.
pub fn node_assignment(g: &ExecGraph) -> BTreeMap<String, Vec<String>> {
    let mut groups: BTreeMap<String, Vec<&TaskRecord>> = BTreeMap::new();
    for t in g.tasks() {
        let key = t.machine.clone().unwrap_or_else(|| UNASSIGNED.to_owned());
        groups.entry(key).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|(machine, mut tasks)| {
            tasks.sort_by(|a, b| {
                (a.start_time.is_none(), a.start_time, &a.task_id).cmp(&(b.start_time.is_none(), b.start_time, &b.task_id))
            });
            (machine, tasks.into_iter().map(|t| t.task_id.clone()).collect())
        })
        .collect()
}
