//! Online monitor: folds events into a [`RunState`] and grows the execution
//! graph as tasks and files show up.

use std::collections::BTreeSet;

use crate::event::{EventError, MonitorEvent, Payload, RunState};
use crate::fsobserver::FileRecord;
use crate::graph::{ExecGraph, GraphError};
use crate::ingest::{EventSink, IngestError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonitorDiagnostic {
    #[error("line {line}: {error}")]
    Ingest { line: usize, error: IngestError },
    #[error("line {line}: {error}")]
    Event { line: usize, error: EventError },
    #[error("{0}")]
    Graph(GraphError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Monitor {
    state: RunState,
    graph: ExecGraph,
    diagnostics: Vec<MonitorDiagnostic>,
}

impl Monitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold a sequence, recording rejected events as diagnostics.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a MonitorEvent>) -> Self {
        let mut m = Monitor::new();
        for (i, ev) in events.into_iter().enumerate() {
            if let Err(error) = m.apply(ev) {
                m.diagnostics.push(MonitorDiagnostic::Event { line: i + 1, error });
            }
        }
        m
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn graph(&self) -> &ExecGraph {
        &self.graph
    }

    pub fn diagnostics(&self) -> &[MonitorDiagnostic] {
        &self.diagnostics
    }

    pub fn into_parts(self) -> (RunState, ExecGraph, Vec<MonitorDiagnostic>) {
        (self.state, self.graph, self.diagnostics)
    }

    /// Apply one event. A rejected event changes nothing; graph-level
    /// rejections (cycles) are recorded as diagnostics.
    pub fn apply(&mut self, ev: &MonitorEvent) -> Result<(), EventError> {
        self.state.apply(ev)?;
        match &ev.payload {
            Payload::Task(task) => {
                let Some(rec) = self.state.tasks.get(&task.id) else { return Ok(()) };
                let is_new = !self.graph.contains(&task.id);
                match self.graph.insert_task(rec.clone()) {
                    Ok(()) if is_new => {
                        let identities: BTreeSet<String> = self
                            .state
                            .file_records()
                            .filter(|f| f.task_id == task.id)
                            .map(|f| f.identity().to_owned())
                            .collect();
                        self.derive_for(&identities);
                    }
                    Ok(()) => {}
                    Err(e) => self.diagnostics.push(MonitorDiagnostic::Graph(e)),
                }
            }
            Payload::File(file) => {
                let identities = BTreeSet::from([file.identity().to_owned()]);
                self.derive_for(&identities);
            }
            _ => {}
        }
        Ok(())
    }

    fn derive_for(&mut self, identities: &BTreeSet<String>) {
        if identities.is_empty() {
            return;
        }
        let files: Vec<FileRecord> =
            self.state.file_records().filter(|f| identities.contains(f.identity())).cloned().collect();
        let report = self.graph.derive_edges(&files);
        self.diagnostics.extend(report.skipped.into_iter().map(MonitorDiagnostic::Graph));
    }
}

impl EventSink for Monitor {
    fn on_event(&mut self, line: usize, event: MonitorEvent) {
        if let Err(error) = self.apply(&event) {
            self.diagnostics.push(MonitorDiagnostic::Event { line, error });
        }
    }

    fn on_diagnostic(&mut self, line: usize, error: IngestError) {
        self.diagnostics.push(MonitorDiagnostic::Ingest { line, error });
    }
}
