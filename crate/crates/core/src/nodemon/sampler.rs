use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::source::{parse_cpu_counters, parse_mem_info, parse_net_counters};
use super::{cpu_utilization, probe_static, CounterSnapshot, NodeError, ResourceSample, StatFile, StatsSource, TimeSeries};
use crate::time::Timestamp;

pub const MIN_INTERVAL_MS: u64 = 10;

/// Consecutive intervals without CPU tick progress before the sampler gives
/// up on a frozen source.
pub const MAX_STALLED_INTERVALS: u32 = 50;

/// Cross-thread stop flag with prompt wake-up of a sleeping sampler.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<(Mutex<bool>, Condvar)>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        let (lock, cvar) = &*self.0;
        *lock.lock().unwrap_or_else(|e| e.into_inner()) = true;
        cvar.notify_all();
    }

    pub fn is_stopped(&self) -> bool {
        *self.0 .0.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Sleep up to `timeout`; returns true if stopped.
    pub fn wait_timeout(&self, timeout: Duration) -> bool {
        let (lock, cvar) = &*self.0;
        let guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let (guard, _) = cvar
            .wait_timeout_while(guard, timeout, |stopped| !*stopped)
            .unwrap_or_else(|e| e.into_inner());
        *guard
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub interval_ms: u64,
    /// Stop on its own after this many samples.
    pub max_samples: Option<usize>,
}

impl SamplerConfig {
    pub fn every(interval_ms: u64) -> Self {
        SamplerConfig { interval_ms, max_samples: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOutcome {
    pub series: TimeSeries,
    /// Set when a counter regression cut the series short.
    pub diagnostic: Option<NodeError>,
}

/// Read the counter files of `src` once, labeled with `taken_at`.
pub fn take_snapshot(src: &dyn StatsSource, taken_at: Timestamp) -> Result<CounterSnapshot, NodeError> {
    let (cpu_busy_ticks, cpu_total_ticks) = parse_cpu_counters(&src.read(StatFile::CpuCounters)?)?;
    let (mem_total_bytes, available) = parse_mem_info(&src.read(StatFile::MemInfo)?)?;
    let (net_rx_bytes, net_tx_bytes) = match src.read(StatFile::NetCounters) {
        Ok(text) => parse_net_counters(&text)?
            .into_iter()
            .filter(|(name, _, _)| name != "lo")
            .fold((0u64, 0u64), |(rx, tx), (_, r, t)| (rx.saturating_add(r), tx.saturating_add(t))),
        Err(NodeError::SourceMissing(_)) => (0, 0),
        Err(e) => return Err(e),
    };
    Ok(CounterSnapshot {
        taken_at,
        cpu_busy_ticks,
        cpu_total_ticks,
        mem_used_bytes: mem_total_bytes.saturating_sub(available),
        mem_total_bytes,
        net_rx_bytes,
        net_tx_bytes,
    })
}

/// One sample from two consecutive snapshots; rates are Δbytes / Δseconds.
pub fn sample_between(a: &CounterSnapshot, b: &CounterSnapshot) -> Result<ResourceSample, NodeError> {
    let elapsed_ms = b.taken_at.millis_since(a.taken_at);
    if elapsed_ms <= 0 {
        return Err(NodeError::DegenerateInterval);
    }
    let cpu_util = cpu_utilization(a, b)?;
    let secs = elapsed_ms as f64 / 1000.0;
    Ok(ResourceSample {
        taken_at: b.taken_at,
        cpu_util,
        mem_used_bytes: b.mem_used_bytes.min(b.mem_total_bytes),
        net_rx_bytes_per_s: (b.net_rx_bytes - a.net_rx_bytes) as f64 / secs,
        net_tx_bytes_per_s: (b.net_tx_bytes - a.net_tx_bytes) as f64 / secs,
    })
}

/// Sample `src` every `cfg.interval_ms` until `stop` fires (or
/// `cfg.max_samples` is reached). Each sample is passed to `on_sample` as
/// soon as it exists. A counter regression, or [`MAX_STALLED_INTERVALS`]
/// degenerate intervals in a row, ends the series early and is reported in
/// [`SamplerOutcome::diagnostic`].
pub fn run_sampler(
    src: &dyn StatsSource,
    cfg: SamplerConfig,
    stop: &StopSignal,
    mut on_sample: impl FnMut(&ResourceSample),
) -> Result<SamplerOutcome, NodeError> {
    if cfg.interval_ms < MIN_INTERVAL_MS {
        return Err(NodeError::InvalidInterval(cfg.interval_ms));
    }
    let profile = probe_static(src)?;
    let mut series = TimeSeries::new(profile.hostname.clone(), cfg.interval_ms);
    series.profile = Some(profile);

    let mut prev = take_snapshot(src, Timestamp::now())?;
    src.advance();
    let interval = Duration::from_millis(cfg.interval_ms);
    let mut diagnostic = None;
    let mut stalled = 0;

    while cfg.max_samples.is_none_or(|max| series.samples.len() < max) {
        if stop.wait_timeout(interval) {
            break;
        }
        let next = take_snapshot(src, Timestamp::now())?;
        src.advance();
        match sample_between(&prev, &next) {
            Ok(sample) => {
                on_sample(&sample);
                series.samples.push(sample);
                prev = next;
                stalled = 0;
            }
            // No progress; keep the older snapshot as the baseline.
            Err(e @ NodeError::DegenerateInterval) => {
                stalled += 1;
                if stalled >= MAX_STALLED_INTERVALS {
                    diagnostic = Some(e);
                    break;
                }
            }
            Err(e @ NodeError::CounterRegression(_)) => {
                diagnostic = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SamplerOutcome { series, diagnostic })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::super::MemorySource;
    use super::*;

    fn statics() -> BTreeMap<StatFile, String> {
        BTreeMap::from([
            (StatFile::Hostname, "n1".to_owned()),
            (StatFile::CpuIdentity, "processor : 0\n".to_owned()),
            (StatFile::MemInfo, "MemTotal: 100 kB\nMemAvailable: 40 kB\n".to_owned()),
        ])
    }

    fn frame(busy: u64, total: u64) -> BTreeMap<StatFile, String> {
        BTreeMap::from([(StatFile::CpuCounters, format!("cpu {busy} 0 0 {} 0 0 0 0\n", total - busy))])
    }

    #[test]
    fn interval_floor() {
        let src = MemorySource::new(statics(), vec![frame(0, 10)]);
        let err = run_sampler(&src, SamplerConfig::every(5), &StopSignal::new(), |_| {}).unwrap_err();
        assert_eq!(err, NodeError::InvalidInterval(5));
    }

    #[test]
    fn immediate_stop_yields_empty_series() {
        let src = MemorySource::new(statics(), vec![frame(0, 10)]);
        let stop = StopSignal::new();
        stop.stop();
        let out = run_sampler(&src, SamplerConfig::every(10), &stop, |_| {}).unwrap();
        assert!(out.series.samples.is_empty());
        assert_eq!(out.series.node, "n1");
    }

    #[test]
    fn frozen_counters_end_the_series() {
        let frames = vec![frame(0, 10), frame(5, 20)];
        let src = MemorySource::new(statics(), frames);
        let out = run_sampler(&src, SamplerConfig { interval_ms: 10, max_samples: Some(3) }, &StopSignal::new(), |_| {}).unwrap();
        assert_eq!(out.series.samples.len(), 1);
        assert_eq!(out.diagnostic, Some(NodeError::DegenerateInterval));
    }

    #[test]
    fn three_samples_strictly_increasing() {
        let frames = (0..4).map(|i| frame(50 * i, 100 * i + 100)).collect();
        let src = MemorySource::new(statics(), frames);
        let cfg = SamplerConfig { interval_ms: 10, max_samples: Some(3) };
        let mut seen = 0;
        let out = run_sampler(&src, cfg, &StopSignal::new(), |_| seen += 1).unwrap();
        assert_eq!(out.series.samples.len(), 3);
        assert_eq!(seen, 3);
        assert!(out.series.samples.windows(2).all(|w| w[0].taken_at < w[1].taken_at));
        assert!(out.series.samples.iter().all(|s| s.cpu_util == 0.5));
        assert_eq!(out.series.samples[0].mem_used_bytes, 60 * 1024);
    }

    #[test]
    fn regression_ends_series_keeping_samples() {
        let frames = vec![frame(0, 100), frame(50, 200), frame(10, 300)];
        let src = MemorySource::new(statics(), frames);
        let cfg = SamplerConfig { interval_ms: 10, max_samples: Some(5) };
        let out = run_sampler(&src, cfg, &StopSignal::new(), |_| {}).unwrap();
        assert_eq!(out.series.samples.len(), 1);
        assert_eq!(out.diagnostic, Some(NodeError::CounterRegression("cpu_busy_ticks")));
    }

    #[test]
    fn stop_from_another_thread() {
        let src = MemorySource::new(statics(), vec![frame(0, 100)]);
        let stop = StopSignal::new();
        let remote = stop.clone();
        let handle = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(30));
            remote.stop();
        });
        // Counters never move: every interval is degenerate, so the loop
        // only ends through the stop signal.
        let out = run_sampler(&src, SamplerConfig::every(10), &stop, |_| {}).unwrap();
        handle.join().unwrap();
        assert!(out.series.samples.is_empty());
    }

    #[test]
    fn missing_source_propagates() {
        let src = MemorySource::new(BTreeMap::new(), vec![]);
        let err = run_sampler(&src, SamplerConfig::every(10), &StopSignal::new(), |_| {}).unwrap_err();
        assert!(matches!(err, NodeError::SourceMissing(_)));
    }
}
