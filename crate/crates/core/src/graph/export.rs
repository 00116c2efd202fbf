use std::collections::BTreeMap;
use std::fmt::Write;

use super::{EdgeSource, ExecGraph, UNASSIGNED};

pub const GANTT_HEADER: &str = "task_id,machine,start_ms,end_ms,duration_ms";

const TASK_STYLE: &str = "node [shape=box, style=filled, color=\"#1f4e9c\", fillcolor=\"#cfe0fa\"];";

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn node_stmt(g: &ExecGraph, id: &str) -> String {
    let label = g.task(id).map(|t| t.name.as_str()).unwrap_or(id);
    format!("{} [label={}];", quote(id), quote(label))
}

/// DOT digraph: one green `cluster_<machine>` per machine holding its blue
/// task nodes, unassigned tasks at top level, edges as in `g`. Output is a
/// pure function of its inputs.
pub fn export_dot(g: &ExecGraph, assignment: &BTreeMap<String, Vec<String>>) -> String {
    let mut out = String::from("digraph run {\n");
    let _ = writeln!(out, "  {TASK_STYLE}");

    let mut placed: Vec<&str> = Vec::new();
    for (machine, tasks) in assignment {
        if machine == UNASSIGNED {
            continue;
        }
        let _ = writeln!(out, "  subgraph {} {{", quote(&format!("cluster_{machine}")));
        let _ = writeln!(out, "    label={};", quote(machine));
        out.push_str("    style=filled;\n    color=\"#2e7d32\";\n    fillcolor=\"#d8f0d8\";\n");
        let mut ids: Vec<&str> = tasks.iter().map(String::as_str).filter(|id| g.contains(id)).collect();
        ids.sort_unstable();
        for id in ids {
            let _ = writeln!(out, "    {}", node_stmt(g, id));
            placed.push(id);
        }
        out.push_str("  }\n");
    }
    placed.sort_unstable();
    for id in g.vertex_ids() {
        if placed.binary_search(&id).is_err() {
            let _ = writeln!(out, "  {}", node_stmt(g, id));
        }
    }
    for (from, to, labels) in g.edges() {
        let file_only = labels.iter().all(|l| matches!(l, EdgeSource::File { .. }));
        let attrs = if file_only { " [style=dashed]" } else { "" };
        let _ = writeln!(out, "  {} -> {}{attrs};", quote(from), quote(to));
    }
    out.push_str("}\n");
    out
}

/// CSV timeline of every task with both timestamps, sorted by start then id.
/// A trailing `# omitted: N` line counts the tasks left out.
pub fn export_gantt(g: &ExecGraph) -> String {
    let mut rows = Vec::new();
    let mut omitted = 0usize;
    for t in g.tasks() {
        match (t.start_time, t.end_time) {
            (Some(s), Some(_)) => rows.push((s, t)),
            _ => omitted += 1,
        }
    }
    rows.sort_by(|a, b| (a.0, &a.1.task_id).cmp(&(b.0, &b.1.task_id)));

    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    wtr.write_record(GANTT_HEADER.split(',')).expect("in-memory write");
    for (start, t) in rows {
        let end = t.end_time.expect("filtered above");
        wtr.write_record([
            t.task_id.clone(),
            t.machine.clone().unwrap_or_default(),
            start.as_millis().to_string(),
            end.as_millis().to_string(),
            end.millis_since(start).to_string(),
        ])
        .expect("in-memory write");
    }
    let mut out = String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("csv output is utf-8");
    let _ = writeln!(out, "# omitted: {omitted}");
    out
}
