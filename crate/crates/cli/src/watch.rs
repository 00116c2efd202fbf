//! `wfmon watch`: a follower thread folds the live stream while a writer
//! thread periodically renders the partial graph to DOT.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context;

use wfmon_core::graph::{export_dot, node_assignment};
use wfmon_core::ingest::LineFollower;
use wfmon_core::nodemon::StopSignal;
use wfmon_core::Monitor;

use crate::config::Settings;
use crate::{usage, write_atomic, Io, UsageError, WatchArgs, EXIT_OK};

const POLL: Duration = Duration::from_millis(50);

fn lock(m: &Mutex<Monitor>) -> MutexGuard<'_, Monitor> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn render(m: &Mutex<Monitor>) -> String {
    let guard = lock(m);
    let g = guard.graph();
    export_dot(g, &node_assignment(g))
}

struct Writer {
    dot_output: PathBuf,
    snapshot_dir: Option<PathBuf>,
    refresh: Duration,
}

impl Writer {
    /// Write a snapshot whenever the rendering changed; one last time after
    /// `stop`. Returns the number of snapshots written.
    fn run(self, monitor: &Mutex<Monitor>, stop: &StopSignal) -> anyhow::Result<usize> {
        let mut last: Option<String> = None;
        let mut written = 0;
        loop {
            let stopped = stop.wait_timeout(self.refresh);
            let dot = render(monitor);
            if last.as_deref() != Some(dot.as_str()) {
                write_atomic(&self.dot_output, dot.as_bytes())?;
                written += 1;
                if let Some(dir) = &self.snapshot_dir {
                    let path = dir.join(format!("snapshot-{written:05}.dot"));
                    fs::write(&path, &dot).with_context(|| format!("writing {}", path.display()))?;
                }
                last = Some(dot);
            }
            if stopped {
                return Ok(written);
            }
        }
    }
}

pub(crate) fn run(a: WatchArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let dot_output: String = s.resolve("dot_output", a.dot_output).map_err(usage)?;
    let refresh_ms: u64 = s.resolve("refresh_ms", a.refresh_ms).map_err(usage)?;
    let idle_timeout_ms: u64 = s.resolve("idle_timeout_ms", a.idle_timeout_ms).map_err(usage)?;
    let snapshot_dir = s.optional("snapshot_dir", a.snapshot_dir).map(PathBuf::from);
    if refresh_ms == 0 {
        return Err(anyhow::Error::new(UsageError("--refresh-ms must be positive".into())));
    }
    if dot_output == "-" {
        return Err(anyhow::Error::new(UsageError("--dot-output must name a file".into())));
    }
    if let Some(dir) = &snapshot_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let from_stdin = a.input == "-";
    let mut source: Box<dyn Read> = if from_stdin {
        Box::new(io::stdin())
    } else {
        Box::new(fs::File::open(&a.input).with_context(|| format!("opening {}", a.input))?)
    };

    let monitor = Arc::new(Mutex::new(Monitor::new()));
    let stop = StopSignal::new();
    let writer = Writer { dot_output: Path::new(&dot_output).to_path_buf(), snapshot_dir, refresh: Duration::from_millis(refresh_ms) };
    let handle = {
        let monitor = Arc::clone(&monitor);
        let stop = stop.clone();
        thread::spawn(move || writer.run(&monitor, &stop))
    };

    let followed = follow(&mut *source, &monitor, from_stdin, Duration::from_millis(idle_timeout_ms));
    stop.stop();
    let written = handle.join().map_err(|_| anyhow::anyhow!("snapshot writer panicked"))??;
    let (timed_out, residue) = followed?;

    let guard = lock(&monitor);
    for d in guard.diagnostics() {
        writeln!(io.stderr, "wfmon: {}: {d}", a.input)?;
    }
    if residue > 0 {
        writeln!(io.stderr, "wfmon: {}: ignoring {residue} bytes of unterminated final line", a.input)?;
    }
    if timed_out {
        writeln!(io.stderr, "wfmon: no new data for {idle_timeout_ms} ms; stopping")?;
    }
    writeln!(
        io.stderr,
        "wfmon: watched {} events, {} tasks, {} edges, {written} snapshot(s)",
        guard.state().event_count,
        guard.graph().vertex_count(),
        guard.graph().edge_count()
    )?;
    Ok(EXIT_OK)
}

/// Feed the source to the monitor until run_end, end of input (stdin), or
/// `idle` without growth (files). Returns (timed out, residue bytes).
fn follow(source: &mut dyn Read, monitor: &Mutex<Monitor>, from_stdin: bool, idle: Duration) -> anyhow::Result<(bool, usize)> {
    let mut follower = LineFollower::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut last_data = Instant::now();
    let mut timed_out = false;
    loop {
        let n = match source.read(&mut buf) {
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e).context("reading event stream"),
        };
        if n > 0 {
            let mut guard = lock(monitor);
            follower.feed(&buf[..n], &mut *guard);
            last_data = Instant::now();
            if guard.state().ended_at.is_some() {
                break;
            }
            continue;
        }
        if from_stdin {
            break;
        }
        if last_data.elapsed() >= idle {
            timed_out = true;
            break;
        }
        thread::sleep(POLL);
    }
    Ok((timed_out, follower.finish().residue.len()))
}
