//! wf-instance JSON documents.
//!
//! The emitted layout is the WfCommons instance layout (`name`,
//! `createdAt`, `schemaVersion`, `workflow.specification`,
//! `workflow.execution`). Everything this crate adds lives under
//! `x-monitor` keys, so a reader that ignores unknown keys sees a plain
//! instance. Unknown keys of parsed documents are kept and re-emitted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::event::RunState;
use crate::graph::ExecGraph;
use crate::nodemon::{Nic, NodeProfile};
use crate::time::Timestamp;

pub const WF_SCHEMA_VERSION: &str = "1.5";
pub const EXTENSION_KEY: &str = "x-monitor";

/// Tolerance for `runtimeInSeconds` against `endTime - startTime`.
const RUNTIME_TOLERANCE_S: f64 = 0.001;

type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WfInstanceDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub created_at: String,
    pub schema_version: String,
    pub workflow: Workflow,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub specification: Specification,
    pub execution: Execution,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Specification {
    pub tasks: Vec<WfTaskSpec>,
    #[serde(default)]
    pub files: Vec<WfFile>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WfFile {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_in_bytes: Option<u64>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WfTaskSpec {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default)]
    pub children: Vec<String>,
    #[serde(default)]
    pub input_files: Vec<String>,
    #[serde(default)]
    pub output_files: Vec<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Execution {
    pub makespan_in_seconds: f64,
    pub executed_at: String,
    #[serde(default)]
    pub machines: Vec<MachineEntry>,
    pub tasks: Vec<WfTaskExec>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WfTaskExec {
    pub id: String,
    pub runtime_in_seconds: f64,
    #[serde(default)]
    pub machines: Vec<String>,
    #[serde(rename = "x-monitor", default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<TaskExtension>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskExtension {
    pub exec_method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submit_time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i64>,
    #[serde(default)]
    pub files: Vec<ExtensionFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_series: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExtensionFile {
    pub path: String,
    pub size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    pub role: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MachineEntry {
    pub node_name: String,
    #[serde(rename = "x-monitor", default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MachineExtension>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MachineExtension {
    #[serde(default)]
    pub ip_addresses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_count: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ram_bytes: Option<i64>,
    #[serde(default)]
    pub nics: Vec<Nic>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WfError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("execution graph is cyclic")]
    CyclicGraph,
    #[error("task {0} is in the graph but not in the run state")]
    InconsistentState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    /// JSON pointer into the document.
    pub path: String,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmitOptions {
    /// Sidecar series path per task; `{task_id}` and `{machine}` are
    /// substituted.
    pub series_path_template: Option<String>,
}

fn ms_to_s(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

/// Build the instance for a run. The specification's edges are exactly the
/// graph's edges.
pub fn emit_instance(
    state: &RunState,
    g: &ExecGraph,
    profiles: &BTreeMap<String, NodeProfile>,
    opts: &EmitOptions,
) -> Result<WfInstanceDoc, WfError> {
    g.topological_order().map_err(|_| WfError::CyclicGraph)?;

    let mut spec_tasks = Vec::new();
    let mut exec_tasks = Vec::new();
    let mut files: BTreeMap<String, Option<u64>> = BTreeMap::new();
    let mut machine_names: BTreeSet<String> = state.machines.keys().cloned().collect();
    machine_names.extend(profiles.keys().cloned());

    for id in g.vertex_ids() {
        let rec = state.tasks.get(id).ok_or_else(|| WfError::InconsistentState(id.to_owned()))?;
        let mut parents: Vec<String> = g.predecessors(id).into_iter().map(str::to_owned).collect();
        parents.sort();
        let children: Vec<String> = g.successors(id).map(str::to_owned).collect();

        let mut input_files = BTreeSet::new();
        let mut output_files = BTreeSet::new();
        let mut ext_files = Vec::new();
        for f in state.file_records().filter(|f| f.task_id == id) {
            let fid = f.identity().to_owned();
            match f.role {
                crate::fsobserver::FileRole::Input => {
                    input_files.insert(fid.clone());
                    files.entry(fid).or_insert(Some(f.size_bytes));
                }
                crate::fsobserver::FileRole::Output => {
                    output_files.insert(fid.clone());
                    files.insert(fid, Some(f.size_bytes));
                }
                crate::fsobserver::FileRole::Unknown => {}
            }
            ext_files.push(ExtensionFile {
                path: f.path.clone(),
                size_bytes: f.size_bytes,
                checksum: f.checksum.clone(),
                role: f.role.as_str().to_owned(),
                extra: Extra::new(),
            });
        }

        spec_tasks.push(WfTaskSpec {
            id: id.to_owned(),
            name: rec.name.clone(),
            parents,
            children,
            input_files: input_files.into_iter().collect(),
            output_files: output_files.into_iter().collect(),
            extra: Extra::new(),
        });

        let machine = rec.machine.clone();
        if let Some(m) = &machine {
            machine_names.insert(m.clone());
        }
        let resource_series = opts.series_path_template.as_ref().map(|t| {
            t.replace("{task_id}", id).replace("{machine}", machine.as_deref().unwrap_or("unassigned"))
        });
        exec_tasks.push(WfTaskExec {
            id: id.to_owned(),
            runtime_in_seconds: rec.duration_ms.map(ms_to_s).unwrap_or(0.0),
            machines: machine.into_iter().collect(),
            monitor: Some(TaskExtension {
                exec_method: rec.exec_method.as_str().to_owned(),
                container_image: rec.container_image.clone(),
                workdir: rec.workdir.clone(),
                submit_time: rec.submit_time.map(|t| t.to_string()),
                start_time: rec.start_time.map(|t| t.to_string()),
                end_time: rec.end_time.map(|t| t.to_string()),
                exit_code: rec.exit_code.map(i64::from),
                files: ext_files,
                resource_series,
                extra: Extra::new(),
            }),
            extra: Extra::new(),
        });
    }

    let machines = machine_names
        .into_iter()
        .map(|name| {
            let profile = profiles.get(&name).or_else(|| state.machines.get(&name).and_then(|m| m.profile.as_ref()));
            MachineEntry {
                monitor: profile.map(|p| MachineExtension {
                    ip_addresses: p.ip_addresses.clone(),
                    cpu_model: p.cpu_model.clone(),
                    core_count: Some(i64::from(p.core_count)),
                    ram_bytes: Some(i64::try_from(p.ram_bytes).unwrap_or(i64::MAX)),
                    nics: p.nics.clone(),
                    extra: Extra::new(),
                }),
                node_name: name,
                extra: Extra::new(),
            }
        })
        .collect();

    let first_start = state.tasks.values().filter_map(|t| t.start_time).min();
    let executed_at = state.started_at.or(first_start).unwrap_or(Timestamp::EPOCH);
    let created_at = state.ended_at.unwrap_or(executed_at);

    Ok(WfInstanceDoc {
        name: if state.run_id.is_empty() { "run".to_owned() } else { state.run_id.clone() },
        description: Some("Workflow execution recorded by wfmon".to_owned()),
        created_at: created_at.to_string(),
        schema_version: WF_SCHEMA_VERSION.to_owned(),
        workflow: Workflow {
            specification: Specification {
                tasks: spec_tasks,
                files: files.into_iter().map(|(id, size)| WfFile { id, size_in_bytes: size, extra: Extra::new() }).collect(),
                extra: Extra::new(),
            },
            execution: Execution {
                makespan_in_seconds: ms_to_s(state.makespan_ms()),
                executed_at: executed_at.to_string(),
                machines,
                tasks: exec_tasks,
                extra: Extra::new(),
            },
            extra: Extra::new(),
        },
        extra: Extra::new(),
    })
}

/// Canonical text: keys sorted at every level, shortest round-trip floats,
/// two-space indentation, trailing newline.
pub fn to_canonical_string(doc: &WfInstanceDoc) -> String {
    let value = serde_json::to_value(doc).expect("document serializes");
    canonical_value_string(&value)
}

pub fn canonical_value_string(value: &Value) -> String {
    // serde_json's default map is ordered by key.
    let mut out = serde_json::to_string_pretty(value).expect("value serializes");
    out.push('\n');
    out
}

/// Remove every object key starting with `x-`, recursively.
pub fn strip_extensions(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !k.starts_with("x-"));
            map.values_mut().for_each(strip_extensions);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_extensions),
        _ => {}
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Object,
    Array,
    String,
    Number,
}

impl Kind {
    fn matches(self, v: &Value) -> bool {
        match self {
            Kind::Object => v.is_object(),
            Kind::Array => v.is_array(),
            Kind::String => v.is_string(),
            Kind::Number => v.is_number(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Object => "an object",
            Kind::Array => "an array",
            Kind::String => "a string",
            Kind::Number => "a number",
        }
    }
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> WfError {
    WfError::SchemaViolation { path: path.into(), message: message.into() }
}

fn field<'a>(obj: &'a Map<String, Value>, base: &str, key: &str, kind: Kind, required: bool) -> Result<Option<&'a Value>, WfError> {
    let path = format!("{base}/{key}");
    match obj.get(key) {
        None if required => Err(violation(path, "required field is missing")),
        None => Ok(None),
        Some(v) if kind.matches(v) => Ok(Some(v)),
        Some(_) => Err(violation(path, format!("expected {}", kind.name()))),
    }
}

fn as_obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, WfError> {
    v.as_object().ok_or_else(|| violation(path, "expected an object"))
}

fn string_list(obj: &Map<String, Value>, base: &str, key: &str) -> Result<(), WfError> {
    if let Some(list) = field(obj, base, key, Kind::Array, false)? {
        for (i, item) in list.as_array().expect("checked").iter().enumerate() {
            if !item.is_string() {
                return Err(violation(format!("{base}/{key}/{i}"), "expected a string"));
            }
        }
    }
    Ok(())
}

fn check_structure(root: &Value) -> Result<(), WfError> {
    let doc = as_obj(root, "")?;
    field(doc, "", "name", Kind::String, true)?;
    field(doc, "", "createdAt", Kind::String, true)?;
    field(doc, "", "schemaVersion", Kind::String, true)?;
    let wf = as_obj(field(doc, "", "workflow", Kind::Object, true)?.expect("required"), "/workflow")?;

    let spec_path = "/workflow/specification";
    let spec = as_obj(field(wf, "/workflow", "specification", Kind::Object, true)?.expect("required"), spec_path)?;
    let tasks = field(spec, spec_path, "tasks", Kind::Array, true)?.expect("required");
    for (i, t) in tasks.as_array().expect("checked").iter().enumerate() {
        let base = format!("{spec_path}/tasks/{i}");
        let t = as_obj(t, &base)?;
        field(t, &base, "id", Kind::String, true)?;
        field(t, &base, "name", Kind::String, true)?;
        for key in ["parents", "children", "inputFiles", "outputFiles"] {
            string_list(t, &base, key)?;
        }
    }
    if let Some(files) = field(spec, spec_path, "files", Kind::Array, false)? {
        for (i, f) in files.as_array().expect("checked").iter().enumerate() {
            let base = format!("{spec_path}/files/{i}");
            field(as_obj(f, &base)?, &base, "id", Kind::String, true)?;
        }
    }

    let exec_path = "/workflow/execution";
    let exec = as_obj(field(wf, "/workflow", "execution", Kind::Object, true)?.expect("required"), exec_path)?;
    field(exec, exec_path, "makespanInSeconds", Kind::Number, true)?;
    field(exec, exec_path, "executedAt", Kind::String, true)?;
    if let Some(machines) = field(exec, exec_path, "machines", Kind::Array, false)? {
        for (i, m) in machines.as_array().expect("checked").iter().enumerate() {
            let base = format!("{exec_path}/machines/{i}");
            field(as_obj(m, &base)?, &base, "nodeName", Kind::String, true)?;
        }
    }
    let tasks = field(exec, exec_path, "tasks", Kind::Array, true)?.expect("required");
    for (i, t) in tasks.as_array().expect("checked").iter().enumerate() {
        let base = format!("{exec_path}/tasks/{i}");
        let t = as_obj(t, &base)?;
        field(t, &base, "id", Kind::String, true)?;
        field(t, &base, "runtimeInSeconds", Kind::Number, true)?;
        string_list(t, &base, "machines")?;
    }
    Ok(())
}

/// Parse a document, keeping unknown keys for re-emission.
pub fn parse_instance(text: &str) -> Result<WfInstanceDoc, WfError> {
    let value: Value = serde_json::from_str(text).map_err(|e| WfError::MalformedJson(e.to_string()))?;
    check_structure(&value)?;
    serde_json::from_value(value).map_err(|e| violation("", e.to_string()))
}

fn check_time(diags: &mut Vec<Diagnostic>, path: String, value: &str) -> Option<Timestamp> {
    match value.parse::<Timestamp>() {
        Ok(ts) => Some(ts),
        Err(_) => {
            diags.push(Diagnostic { path, severity: Severity::Error, message: format!("not an ISO-8601 instant: {value}") });
            None
        }
    }
}

/// Check every document invariant. An empty list means the document is
/// valid; a non-`1.5` schema version yields a warning.
pub fn validate_instance(doc: &WfInstanceDoc) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut err = |path: String, message: String| diags.push(Diagnostic { path, severity: Severity::Error, message });

    let spec = &doc.workflow.specification;
    let exec = &doc.workflow.execution;
    let spec_base = "/workflow/specification";
    let exec_base = "/workflow/execution";

    let mut task_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, t) in spec.tasks.iter().enumerate() {
        if task_ids.insert(&t.id, i).is_some() {
            err(format!("{spec_base}/tasks/{i}/id"), format!("duplicate task id {}", t.id));
        }
    }
    let mut file_ids = BTreeSet::new();
    for (i, f) in spec.files.iter().enumerate() {
        if !file_ids.insert(f.id.as_str()) {
            err(format!("{spec_base}/files/{i}/id"), format!("duplicate file id {}", f.id));
        }
    }

    for (i, t) in spec.tasks.iter().enumerate() {
        let base = format!("{spec_base}/tasks/{i}");
        for (key, list, reverse) in [("parents", &t.parents, "children"), ("children", &t.children, "parents")] {
            for (j, other) in list.iter().enumerate() {
                match task_ids.get(other.as_str()) {
                    None => err(format!("{base}/{key}/{j}"), format!("unknown task id {other}")),
                    Some(&k) => {
                        let back = if key == "parents" { &spec.tasks[k].children } else { &spec.tasks[k].parents };
                        if !back.contains(&t.id) {
                            err(
                                format!("{spec_base}/tasks/{k}/{reverse}"),
                                format!("{} lists {other} in {key} but {other} does not list {} in {reverse}", t.id, t.id),
                            );
                        }
                    }
                }
            }
        }
        for (key, list) in [("inputFiles", &t.input_files), ("outputFiles", &t.output_files)] {
            for (j, f) in list.iter().enumerate() {
                if !file_ids.contains(f.as_str()) {
                    err(format!("{base}/{key}/{j}"), format!("unknown file id {f}"));
                }
            }
        }
    }

    if !exec.makespan_in_seconds.is_finite() || exec.makespan_in_seconds < 0.0 {
        err(format!("{exec_base}/makespanInSeconds"), "must be a non-negative number".into());
    }

    let mut machine_names = BTreeSet::new();
    for (i, m) in exec.machines.iter().enumerate() {
        let base = format!("{exec_base}/machines/{i}");
        if !machine_names.insert(m.node_name.as_str()) {
            err(format!("{base}/nodeName"), format!("duplicate machine {}", m.node_name));
        }
        if let Some(ext) = &m.monitor {
            if ext.core_count.is_some_and(|c| c < 1) {
                err(format!("{base}/{EXTENSION_KEY}/coreCount"), "must be at least 1".into());
            }
            if ext.ram_bytes.is_some_and(|r| r < 0) {
                err(format!("{base}/{EXTENSION_KEY}/ramBytes"), "must be non-negative".into());
            }
        }
    }

    let mut time_checks = Vec::new();
    for (i, t) in exec.tasks.iter().enumerate() {
        let base = format!("{exec_base}/tasks/{i}");
        if !task_ids.contains_key(t.id.as_str()) {
            err(format!("{base}/id"), format!("no specification task with id {}", t.id));
        }
        if !t.runtime_in_seconds.is_finite() || t.runtime_in_seconds < 0.0 {
            err(format!("{base}/runtimeInSeconds"), "must be a non-negative number".into());
        }
        for (j, m) in t.machines.iter().enumerate() {
            if !machine_names.contains(m.as_str()) {
                err(format!("{base}/machines/{j}"), format!("unknown machine {m}"));
            }
        }
        if let Some(ext) = &t.monitor {
            time_checks.push((base, t.runtime_in_seconds, ext));
        }
    }

    for (base, runtime, ext) in time_checks {
        let ext_base = format!("{base}/{EXTENSION_KEY}");
        let mut times = Vec::new();
        for (key, value) in [("submitTime", &ext.submit_time), ("startTime", &ext.start_time), ("endTime", &ext.end_time)] {
            times.push(value.as_deref().and_then(|v| check_time(&mut diags, format!("{ext_base}/{key}"), v)));
        }
        if let (Some(start), Some(end)) = (times[1], times[2]) {
            let span = end.millis_since(start) as f64 / 1000.0;
            if (runtime - span).abs() > RUNTIME_TOLERANCE_S + 1e-9 {
                diags.push(Diagnostic {
                    path: format!("{base}/runtimeInSeconds"),
                    severity: Severity::Error,
                    message: format!("runtime {runtime} differs from endTime - startTime = {span}"),
                });
            }
        }
    }

    check_time(&mut diags, "/createdAt".into(), &doc.created_at);
    check_time(&mut diags, format!("{exec_base}/executedAt"), &exec.executed_at);
    if doc.schema_version != WF_SCHEMA_VERSION {
        diags.push(Diagnostic {
            path: "/schemaVersion".into(),
            severity: Severity::Warning,
            message: format!("VersionWarning: schema version {} is not {WF_SCHEMA_VERSION}", doc.schema_version),
        });
    }
    diags
}
