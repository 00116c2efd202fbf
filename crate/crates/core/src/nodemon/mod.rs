//! Node-level monitoring: static hardware profiles and resource-usage series.
//!
//! Everything is read through a [`StatsSource`], which is either a directory
//! of counter files (a fixture, or the live `/proc` tree mapped onto the same
//! names) or an in-memory script of file contents.

mod sampler;
mod series;
mod source;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

pub use sampler::{run_sampler, sample_between, take_snapshot, SamplerConfig, SamplerOutcome, StopSignal, MAX_STALLED_INTERVALS, MIN_INTERVAL_MS};
pub use series::{SeriesError, TimeSeries, CSV_HEADER};
pub use source::{probe_static, DirSource, MemorySource, StatFile, StatsSource};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nic {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mbps: Option<u64>,
    #[serde(default)]
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub hostname: String,
    pub ip_addresses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_model: Option<String>,
    pub core_count: u32,
    pub ram_bytes: u64,
    pub nics: Vec<Nic>,
}

impl NodeProfile {
    /// Bare profile for a host we know nothing else about.
    pub fn named(hostname: impl Into<String>) -> Self {
        NodeProfile {
            hostname: hostname.into(),
            ip_addresses: Vec::new(),
            cpu_model: None,
            core_count: 1,
            ram_bytes: 0,
            nics: Vec::new(),
        }
    }
}

/// Cumulative counters read at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub taken_at: Timestamp,
    pub cpu_busy_ticks: u64,
    pub cpu_total_ticks: u64,
    pub mem_used_bytes: u64,
    pub mem_total_bytes: u64,
    pub net_rx_bytes: u64,
    pub net_tx_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    pub taken_at: Timestamp,
    pub cpu_util: f64,
    pub mem_used_bytes: u64,
    pub net_rx_bytes_per_s: f64,
    pub net_tx_bytes_per_s: f64,
}

impl ResourceSample {
    pub fn in_range(&self) -> bool {
        (0.0..=1.0).contains(&self.cpu_util)
            && self.net_rx_bytes_per_s.is_finite()
            && self.net_rx_bytes_per_s >= 0.0
            && self.net_tx_bytes_per_s.is_finite()
            && self.net_tx_bytes_per_s >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NodeError {
    #[error("stats source missing {0}")]
    SourceMissing(String),
    #[error("cannot parse {file} at line {line}")]
    ParseFailure { file: String, line: usize },
    #[error("degenerate sampling interval")]
    DegenerateInterval,
    #[error("cumulative counter {0} decreased")]
    CounterRegression(&'static str),
    #[error("sampling interval {0} ms is below the {min} ms minimum", min = MIN_INTERVAL_MS)]
    InvalidInterval(u64),
    #[error("i/o error reading {file}: {message}")]
    Io { file: String, message: String },
}

fn check_monotone(a: &CounterSnapshot, b: &CounterSnapshot) -> Result<(), NodeError> {
    let pairs = [
        ("cpu_busy_ticks", a.cpu_busy_ticks, b.cpu_busy_ticks),
        ("cpu_total_ticks", a.cpu_total_ticks, b.cpu_total_ticks),
        ("net_rx_bytes", a.net_rx_bytes, b.net_rx_bytes),
        ("net_tx_bytes", a.net_tx_bytes, b.net_tx_bytes),
    ];
    for (name, before, after) in pairs {
        if after < before {
            return Err(NodeError::CounterRegression(name));
        }
    }
    Ok(())
}

/// Busy fraction between two snapshots: Δbusy / Δtotal, clamped to [0, 1].
pub fn cpu_utilization(a: &CounterSnapshot, b: &CounterSnapshot) -> Result<f64, NodeError> {
    check_monotone(a, b)?;
    let total = b.cpu_total_ticks - a.cpu_total_ticks;
    if total == 0 {
        return Err(NodeError::DegenerateInterval);
    }
    let busy = b.cpu_busy_ticks - a.cpu_busy_ticks;
    Ok((busy as f64 / total as f64).clamp(0.0, 1.0))
}
