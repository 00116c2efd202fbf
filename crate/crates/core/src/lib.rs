//! Workflow execution monitoring: event model, stream ingestion, execution
//! graphs, wf-instance documents, filesystem and node observation, wrapper
//! hook injection and a deterministic run simulator.

pub mod event;
pub mod fsobserver;
pub mod graph;
pub mod ingest;
pub mod injector;
pub mod monitor;
pub mod nodemon;
pub mod simulator;
pub mod time;
pub mod wfformat;

pub use event::{EventKind, MonitorEvent, Payload, RunState, TaskPayload, TaskRecord, TaskStatus};
pub use graph::{critical_path, longest_path_by, node_assignment, ExecGraph, LongestPath};
pub use monitor::Monitor;
pub use time::Timestamp;

/// Longest path weighted in integer milliseconds.
pub type LongestPathMs = LongestPath<u64>;
/// Longest path weighted in floating-point seconds.
pub type LongestPathSecs = LongestPath<f64>;
