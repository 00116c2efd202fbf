//! Event ingestion.
//!
//! The wire format is JSON Lines, one event per line:
//!
//! ```text
//! {"v":1,"ts":"2025-01-01T00:00:00.000Z","kind":"task_started","run_id":"r1","task":{"id":"t1","name":"fastqc"}}
//! ```
//!
//! Task kinds carry a `task` object, `file_observed` a `file` object,
//! `node_static` / `node_sample` a `node` object; `run_start` / `run_end`
//! carry none of them.

use std::collections::BTreeMap;
use std::io::{self, Read};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::event::{EventKind, ExecMethod, MonitorEvent, NodeSampleRecord, Payload, TaskPayload, TaskRecord, TaskStatus, SCHEMA_VERSION};
use crate::fsobserver::FileRecord;
use crate::nodemon::NodeProfile;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("invalid field {field}: {message}")]
    InvalidField { field: String, message: String },
    #[error("unknown event kind {0}")]
    UnknownKind(String),
    #[error("unknown schema version {0}")]
    UnknownSchemaVersion(i64),
}

#[derive(Serialize)]
struct WireEvent<'a> {
    v: u32,
    ts: Timestamp,
    kind: EventKind,
    run_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<&'a TaskPayload>,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<&'a FileRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node: Option<Value>,
}

/// Serialize an event as one wire line (without the trailing newline).
pub fn event_to_line(ev: &MonitorEvent) -> String {
    let mut wire = WireEvent {
        v: ev.schema_version,
        ts: ev.timestamp,
        kind: ev.kind,
        run_id: &ev.run_id,
        task: None,
        file: None,
        node: None,
    };
    match &ev.payload {
        Payload::None => {}
        Payload::Task(t) => wire.task = Some(t),
        Payload::File(f) => wire.file = Some(f),
        Payload::NodeStatic(p) => wire.node = Some(serde_json::to_value(p).expect("profile serializes")),
        Payload::NodeSample(s) => wire.node = Some(serde_json::to_value(s).expect("sample serializes")),
    }
    serde_json::to_string(&wire).expect("event serializes")
}

/// Serialize a whole stream, newline-terminated.
pub fn events_to_jsonl(events: &[MonitorEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&event_to_line(ev));
        out.push('\n');
    }
    out
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, IngestError> {
    obj.get(key).ok_or_else(|| IngestError::MissingField(key.to_owned()))
}

fn required_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, IngestError> {
    required(obj, key)?.as_str().ok_or_else(|| IngestError::InvalidField {
        field: key.to_owned(),
        message: "expected a string".into(),
    })
}

fn decode<T: DeserializeOwned>(field: &str, value: &Value) -> Result<T, IngestError> {
    serde_json::from_value(value.clone()).map_err(|e| IngestError::InvalidField { field: field.to_owned(), message: e.to_string() })
}

fn decode_object<T: DeserializeOwned>(field: &str, value: &Value, required_keys: &[&str]) -> Result<T, IngestError> {
    let obj = value.as_object().ok_or_else(|| IngestError::InvalidField {
        field: field.to_owned(),
        message: "expected an object".into(),
    })?;
    for key in required_keys {
        if !obj.contains_key(*key) {
            return Err(IngestError::MissingField(format!("{field}.{key}")));
        }
    }
    decode(field, value)
}

/// Parse one wire line. Surrounding whitespace is ignored.
pub fn parse_event_line(line: &str) -> Result<MonitorEvent, IngestError> {
    let value: Value = serde_json::from_str(line.trim()).map_err(|e| IngestError::MalformedJson(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| IngestError::MalformedJson("expected a JSON object".into()))?;

    let version = required(obj, "v")?.as_i64().ok_or_else(|| IngestError::InvalidField {
        field: "v".into(),
        message: "expected an integer".into(),
    })?;
    if version != i64::from(SCHEMA_VERSION) {
        return Err(IngestError::UnknownSchemaVersion(version));
    }
    let ts_text = required_str(obj, "ts")?;
    let timestamp: Timestamp = ts_text.parse().map_err(|_| IngestError::InvalidField {
        field: "ts".into(),
        message: format!("not an ISO-8601 instant: {ts_text}"),
    })?;
    let kind_text = required_str(obj, "kind")?;
    let kind = EventKind::from_name(kind_text).ok_or_else(|| IngestError::UnknownKind(kind_text.to_owned()))?;
    let run_id = required_str(obj, "run_id")?.to_owned();

    let expected = match kind {
        EventKind::RunStart | EventKind::RunEnd => None,
        EventKind::FileObserved => Some("file"),
        EventKind::NodeStatic | EventKind::NodeSample => Some("node"),
        _ => Some("task"),
    };
    for key in ["task", "file", "node"] {
        if obj.contains_key(key) && Some(key) != expected {
            return Err(IngestError::InvalidField { field: key.into(), message: format!("not allowed for {kind}") });
        }
    }

    let payload = match expected {
        None => Payload::None,
        Some(key) => {
            let body = required(obj, key)?;
            match kind {
                EventKind::FileObserved => Payload::File(decode_object(
                    "file",
                    body,
                    &["path", "size_bytes", "mtime", "role", "task_id"],
                )?),
                EventKind::NodeStatic => Payload::NodeStatic(decode_object::<NodeProfile>("node", body, &["hostname"])?),
                EventKind::NodeSample => {
                    Payload::NodeSample(decode_object::<NodeSampleRecord>("node", body, &["hostname", "sample"])?)
                }
                _ => Payload::Task(decode_object("task", body, &["id"])?),
            }
        }
    };

    Ok(MonitorEvent { schema_version: SCHEMA_VERSION, kind, timestamp, run_id, payload })
}

/// Batch parse of a whole text. The last line counts as complete even
/// without a newline. Blank lines are skipped; entries carry 1-based line
/// numbers.
pub fn parse_events(text: &str) -> Vec<(usize, Result<MonitorEvent, IngestError>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, parse_event_line(l)))
        .collect()
}

/// Receives the output of a stream follower, in stream order.
pub trait EventSink {
    fn on_event(&mut self, line: usize, event: MonitorEvent);
    fn on_diagnostic(&mut self, line: usize, error: IngestError);
}

/// Sink that simply keeps everything.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct CollectSink {
    pub events: Vec<MonitorEvent>,
    pub diagnostics: Vec<(usize, IngestError)>,
}

impl EventSink for CollectSink {
    fn on_event(&mut self, _line: usize, event: MonitorEvent) {
        self.events.push(event);
    }

    fn on_diagnostic(&mut self, line: usize, error: IngestError) {
        self.diagnostics.push((line, error));
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FollowReport {
    pub lines: usize,
    pub events: usize,
    pub diagnostics: usize,
    /// Bytes of an unterminated final line; never delivered.
    pub residue: Vec<u8>,
}

/// Incremental line framer: feed it chunks of any size, complete lines are
/// parsed and handed to the sink as soon as their newline arrives.
#[derive(Debug, Default)]
pub struct LineFollower {
    buf: Vec<u8>,
    report: FollowReport,
}

impl LineFollower {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, chunk: &[u8], sink: &mut dyn EventSink) {
        self.buf.extend_from_slice(chunk);
        let mut start = 0;
        while let Some(pos) = self.buf[start..].iter().position(|&b| b == b'\n') {
            let end = start + pos;
            self.report.lines += 1;
            let line_no = self.report.lines;
            match std::str::from_utf8(&self.buf[start..end]) {
                Ok(line) if line.trim().is_empty() => {}
                Ok(line) => match parse_event_line(line) {
                    Ok(ev) => {
                        self.report.events += 1;
                        sink.on_event(line_no, ev);
                    }
                    Err(e) => {
                        self.report.diagnostics += 1;
                        sink.on_diagnostic(line_no, e);
                    }
                },
                Err(_) => {
                    self.report.diagnostics += 1;
                    sink.on_diagnostic(line_no, IngestError::MalformedJson("line is not valid UTF-8".into()));
                }
            }
            start = end + 1;
        }
        self.buf.drain(..start);
    }

    /// Bytes currently buffered without a terminating newline.
    pub fn pending(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(mut self) -> FollowReport {
        self.report.residue = std::mem::take(&mut self.buf);
        self.report
    }
}

/// Follow `source` to its end, delivering every complete line to `sink`.
pub fn follow_stream<R: Read>(mut source: R, sink: &mut dyn EventSink) -> io::Result<FollowReport> {
    let mut follower = LineFollower::new();
    let mut buf = [0u8; 8192];
    loop {
        match source.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => follower.feed(&buf[..n], sink),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(follower.finish())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("trace table has no header")]
    HeaderMissing,
    #[error("line {0}: column count differs from header")]
    RaggedRow(usize),
    #[error("line {line}: bad {column} value `{value}`")]
    BadValue { line: usize, column: String, value: String },
}

/// Convert `2m 30s`, `150ms`, `1h 2m`, `1.5s`, `3d 4h` to milliseconds.
pub fn parse_duration_ms(text: &str) -> Option<u64> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    let bytes = s.as_bytes();
    let mut i = 0;
    let mut total = 0f64;
    let mut any = false;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let num_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        let number: f64 = s[num_start..i].parse().ok()?;
        let unit_start = i;
        while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
            i += 1;
        }
        let scale = match &s[unit_start..i] {
            "ms" => 1.0,
            "s" => 1_000.0,
            "m" => 60_000.0,
            "h" => 3_600_000.0,
            "d" => 86_400_000.0,
            _ => return None,
        };
        total += number * scale;
        any = true;
    }
    any.then(|| total.round() as u64)
}

fn trace_status(text: &str) -> Option<TaskStatus> {
    match text.to_ascii_uppercase().as_str() {
        "SUBMITTED" | "NEW" | "PENDING" => Some(TaskStatus::Submitted),
        "STARTED" | "RUNNING" => Some(TaskStatus::Started),
        "COMPLETED" => Some(TaskStatus::Completed),
        "FAILED" | "ABORTED" => Some(TaskStatus::Failed),
        "CACHED" => Some(TaskStatus::Cached),
        _ => None,
    }
}

/// Parse an engine trace table (tab-separated, header row, `-` = absent).
pub fn parse_trace_table(text: &str) -> Result<Vec<TaskRecord>, TraceError> {
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header: Vec<&str> = match lines.next() {
        Some(h) if !h.trim().is_empty() => h.split('\t').map(str::trim).collect(),
        _ => return Err(TraceError::HeaderMissing),
    };

    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != header.len() {
            return Err(TraceError::RaggedRow(line_no));
        }
        let mut row: BTreeMap<&str, &str> = BTreeMap::new();
        for (col, cell) in header.iter().zip(&cells) {
            let cell = cell.trim();
            if cell != "-" && !cell.is_empty() {
                row.insert(col, cell);
            }
        }
        let bad = |column: &str, value: &str| TraceError::BadValue {
            line: line_no,
            column: column.to_owned(),
            value: value.to_owned(),
        };
        let time = |column: &str| -> Result<Option<Timestamp>, TraceError> {
            row.get(column).map(|v| Timestamp::parse_lenient(v).map_err(|_| bad(column, v))).transpose()
        };

        let task_id = row.get("task_id").map(|s| s.to_string()).unwrap_or_else(|| (out.len() + 1).to_string());
        let submit = time("submit")?;
        let start = time("start")?;
        let complete = time("complete")?;
        let status = match row.get("status") {
            Some(s) => trace_status(s).ok_or_else(|| bad("status", s))?,
            None if complete.is_some() => TaskStatus::Completed,
            None if start.is_some() => TaskStatus::Started,
            None => TaskStatus::Submitted,
        };

        let mut rec = TaskRecord::new(task_id, status);
        if let Some(name) = row.get("name") {
            rec.name = name.to_string();
        }
        rec.submit_time = submit;
        rec.start_time = start;
        rec.end_time = complete;
        rec.duration_ms = match rec.computed_duration_ms() {
            Some(ms) => Some(ms),
            None => row
                .get("realtime")
                .map(|v| parse_duration_ms(v).ok_or_else(|| bad("realtime", v)))
                .transpose()?,
        };
        if let Some(image) = row.get("container") {
            rec.container_image = Some(image.to_string());
            rec.exec_method = ExecMethod::Container;
        }
        if let Some(dir) = row.get("workdir") {
            rec.workdir = Some(dir.to_string());
        }
        if let Some(d) = row.get("duration") {
            parse_duration_ms(d).ok_or_else(|| bad("duration", d))?;
        }
        for (col, cell) in &row {
            if !matches!(*col, "task_id" | "name" | "status" | "submit" | "start" | "complete" | "realtime" | "container" | "workdir") {
                rec.extras.insert(col.to_string(), cell.to_string());
            }
        }
        out.push(rec);
    }
    Ok(out)
}
