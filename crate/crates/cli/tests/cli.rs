use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde_json::Value;

use wfmon_cli::run_cli;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_env(args: &[&str], env: &BTreeMap<String, String>) -> Out {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("wfmon").chain(args.iter().copied());
    let code = run_cli(argv, env, &mut stdout, &mut stderr);
    Out { code, stdout: String::from_utf8(stdout).unwrap(), stderr: String::from_utf8(stderr).unwrap() }
}

fn run(args: &[&str]) -> Out {
    run_env(args, &BTreeMap::new())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["bogus"]).code, 2);
    assert_eq!(run(&["analyze", "sideways"]).code, 2);
    assert_eq!(run(&["simulate", "--shape", "spiral"]).code, 2);
    let bad_env = BTreeMap::from([("WFMON_TASKS".to_string(), "many".to_string())]);
    let out = run_env(&["simulate"], &bad_env);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("WFMON_TASKS"), "{}", out.stderr);
    assert!(out.stdout.is_empty());
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(&["--help"]).code, 0);
    assert_eq!(run(&["--version"]).code, 0);
}

#[test]
fn missing_input_is_operational() {
    let out = run(&["ingest", "/nonexistent/run.events.jsonl"]);
    assert_eq!(out.code, 1);
    assert!(out.stdout.is_empty());
}

#[test]
fn empty_events_file_gives_empty_dot() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("empty.events.jsonl");
    fs::write(&events, "").unwrap();
    let out = run(&["analyze", "dot", p(&events)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.starts_with("digraph"));
    assert!(out.stdout.trim_end().ends_with('}'));
    assert!(!out.stdout.contains("->"));
    assert!(!out.stdout.contains("cluster_"));
}

#[test]
fn simulate_emit_validate() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("run.events.jsonl");
    let doc = dir.path().join("run.json");
    let answers = dir.path().join("answers.json");
    let out = run(&["simulate", "--seed", "42", "--tasks", "50", "--machines", "6", "-o", p(&events), "--answers", p(&answers)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.is_empty());

    let out = run(&["emit", p(&events), "-o", p(&doc)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let out = run(&["validate", p(&doc)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(!out.stderr.contains("error:"), "{}", out.stderr);

    let parsed: Value = serde_json::from_str(&fs::read_to_string(&doc).unwrap()).unwrap();
    assert_eq!(parsed["workflow"]["specification"]["tasks"].as_array().unwrap().len(), 50);
    assert_eq!(parsed["workflow"]["execution"]["machines"].as_array().unwrap().len(), 6);

    let reference: Value = serde_json::from_str(&fs::read_to_string(&answers).unwrap()).unwrap();
    let cp: Value = serde_json::from_str(&run(&["analyze", "critical-path", p(&events)]).stdout).unwrap();
    assert_eq!(cp["length_ms"], reference["critical_path_length_ms"]);
}

#[test]
fn validate_rejects_broken_documents() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("bad.json");
    fs::write(&doc, r#"{"name": "x", "schemaVersion": "1.5", "workflow": {}}"#).unwrap();
    let out = run(&["validate", p(&doc)]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("error"), "{}", out.stderr);
    fs::write(&doc, "{not json").unwrap();
    assert_eq!(run(&["validate", p(&doc)]).code, 1);
}

#[test]
fn patch_unpatch_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join(".command.sh");
    let original = "#!/bin/bash -ue\nset -o pipefail\nsalmon quant -i idx -o out\n";
    fs::write(&script, original).unwrap();

    let out = run(&["patch-wrapper", p(&script), "--task-id", "t0001", "--export", "WFMON_RUN=r1"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("export WFMON_RUN="));
    assert_eq!(fs::read_to_string(&script).unwrap(), original);

    let out = run(&["patch-wrapper", p(&script), "--in-place"]);
    assert_eq!(out.code, 0);
    let patched = fs::read_to_string(&script).unwrap();
    assert_ne!(patched, original);

    // Second patch is a no-op.
    assert_eq!(run(&["patch-wrapper", p(&script), "--in-place"]).code, 0);
    assert_eq!(fs::read_to_string(&script).unwrap(), patched);

    assert_eq!(run(&["unpatch-wrapper", p(&script), "--in-place"]).code, 0);
    assert_eq!(fs::read_to_string(&script).unwrap(), original);

    let out = run(&["unpatch-wrapper", p(&script)]);
    assert_eq!(out.code, 0);
    assert_eq!(out.stdout, original);
    assert!(out.stderr.contains("NotPatched"), "{}", out.stderr);

    assert_eq!(run(&["patch-wrapper", p(&script), "--export", "no-equals-sign"]).code, 2);
}

fn write_fixture(dir: &Path) {
    fs::write(dir.join("hostname"), "fixture-01\n").unwrap();
    fs::write(dir.join("cpu_identity"), "processor : 0\nmodel name : Fixture CPU\nprocessor : 1\nmodel name : Fixture CPU\n").unwrap();
    fs::write(dir.join("mem_info"), "MemTotal: 8192 kB\nMemAvailable: 2048 kB\n").unwrap();
    fs::write(dir.join("addresses"), "eth0 10.1.2.3/24\n").unwrap();
    fs::write(dir.join("nic_info"), "eth0 aa:bb:cc:dd:ee:01 1000 up\n").unwrap();
    for (i, (user, idle, rx)) in [(0, 0, 0), (25, 75, 1000), (100, 100, 3000)].iter().enumerate() {
        let frame = dir.join("frames").join(format!("{i:02}"));
        fs::create_dir_all(&frame).unwrap();
        fs::write(frame.join("cpu_counters"), format!("cpu  {user} 0 0 {idle} 0 0 0 0 0 0\n")).unwrap();
        fs::write(frame.join("net_counters"), format!("  eth0: {rx} 0 0 0 0 0 0 0 {rx} 0 0 0 0 0 0 0\n")).unwrap();
    }
}

#[test]
fn probe_node_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = run(&["probe-node", "--source", p(dir.path())]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["hostname"], "fixture-01");
    assert_eq!(v["core_count"], 2);
    assert_eq!(v["ram_bytes"], 8192 * 1024);
    assert_eq!(v["cpu_model"], "Fixture CPU");
    assert_eq!(v["ip_addresses"], serde_json::json!(["10.1.2.3"]));
    assert_eq!(v["nics"][0]["speed_mbps"], 1000);

    let empty = tempfile::tempdir().unwrap();
    let out = run(&["probe-node", "--source", p(empty.path())]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("SourceMissing"), "{}", out.stderr);
}

#[test]
fn sample_fixture_to_file() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let series = dir.path().join("out/series.jsonl");
    let out = run(&["sample", "--source", p(dir.path()), "--interval-ms", "10", "--max-samples", "2", "-o", p(&series)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let text = fs::read_to_string(&series).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["node"], "fixture-01");
    assert_eq!(lines[1]["cpu_util"], 0.25);
    assert_eq!(lines[2]["cpu_util"], 0.75);

    let out = run(&["sample", "--source", p(dir.path()), "--interval-ms", "10", "--max-samples", "1", "--format", "csv"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("taken_at,cpu_util,"), "{}", out.stdout);
    assert_eq!(out.stdout.lines().count(), 2);
}

#[test]
fn scan_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("result.txt"), "hello\n").unwrap();
    fs::write(dir.path().join(".command.log"), "log\n").unwrap();
    let out = run(&["scan", p(dir.path()), "--task-id", "t0007", "--checksum", "false"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let events: Vec<Value> = out.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 2);
    assert!(events.iter().all(|e| e["kind"] == "file_observed" && e["file"]["task_id"] == "t0007"));
    assert!(events.iter().all(|e| e["file"]["checksum"].is_null()));
}

#[test]
fn config_precedence_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("wfmon.conf");
    fs::write(&conf, "tasks = 5\nmachines = 2\nseed = 1\n").unwrap();
    let count_tasks = |out: &Out| out.stdout.lines().filter(|l| l.contains("\"task_submitted\"")).count();

    let from_file = run(&["simulate", "--config", p(&conf)]);
    assert_eq!(from_file.code, 0, "{}", from_file.stderr);
    assert_eq!(count_tasks(&from_file), 5);

    let env = BTreeMap::from([
        ("WFMON_CONFIG".to_string(), p(&conf).to_string()),
        ("WFMON_TASKS".to_string(), "7".to_string()),
    ]);
    let from_env = run_env(&["simulate"], &env);
    assert_eq!(count_tasks(&from_env), 7);

    let from_flag = run_env(&["simulate", "--tasks", "3"], &env);
    assert_eq!(count_tasks(&from_flag), 3);

    fs::write(&conf, "taks = 5\n").unwrap();
    assert_eq!(run(&["simulate", "--config", p(&conf)]).code, 2);
}

fn dot_nodes_and_edges(dot: &str) -> (BTreeSet<String>, BTreeSet<(String, String)>) {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for line in dot.lines().map(str::trim) {
        if let Some((from, to)) = line.split_once(" -> ") {
            let to = to.split(['[', ';']).next().unwrap().trim();
            edges.insert((from.trim_matches('"').to_owned(), to.trim_matches('"').to_owned()));
        } else if line.starts_with('"') && line.contains("[label=") {
            nodes.insert(line.split('"').nth(1).unwrap().to_owned());
        }
    }
    (nodes, edges)
}

#[test]
fn watch_snapshots_are_subgraphs_of_the_final_graph() {
    let dir = tempfile::tempdir().unwrap();
    let full = run(&["simulate", "--seed", "3", "--tasks", "15", "--machines", "3"]).stdout;
    let live = dir.path().join("live.events.jsonl");
    fs::write(&live, "").unwrap();
    let dot = dir.path().join("live.dot");
    let snaps = dir.path().join("snaps");

    let writer = {
        let live = live.clone();
        let lines: Vec<String> = full.lines().map(|l| format!("{l}\n")).collect();
        std::thread::spawn(move || {
            use std::io::Write;
            let mut f = fs::OpenOptions::new().append(true).open(&live).unwrap();
            for chunk in lines.chunks(40) {
                f.write_all(chunk.concat().as_bytes()).unwrap();
                f.flush().unwrap();
                std::thread::sleep(std::time::Duration::from_millis(60));
            }
        })
    };
    let out = run(&[
        "watch",
        p(&live),
        "--dot-output",
        p(&dot),
        "--refresh-ms",
        "20",
        "--idle-timeout-ms",
        "5000",
        "--snapshot-dir",
        p(&snaps),
    ]);
    writer.join().unwrap();
    assert_eq!(out.code, 0, "{}", out.stderr);

    let final_dot = fs::read_to_string(&dot).unwrap();
    let events = dir.path().join("full.events.jsonl");
    fs::write(&events, &full).unwrap();
    assert_eq!(final_dot, run(&["analyze", "dot", p(&events)]).stdout);

    let (all_nodes, all_edges) = dot_nodes_and_edges(&final_dot);
    assert_eq!(all_nodes.len(), 15);
    let mut names: Vec<_> = fs::read_dir(&snaps).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(!names.is_empty());
    let mut previous = (BTreeSet::new(), BTreeSet::new());
    for path in names {
        let (nodes, edges) = dot_nodes_and_edges(&fs::read_to_string(&path).unwrap());
        assert!(nodes.is_subset(&all_nodes) && edges.is_subset(&all_edges), "{}", path.display());
        assert!(previous.0.is_subset(&nodes) && previous.1.is_subset(&edges), "{}", path.display());
        previous = (nodes, edges);
    }
}

#[test]
fn watch_gives_up_when_idle() {
    let dir = tempfile::tempdir().unwrap();
    let live = dir.path().join("idle.events.jsonl");
    fs::write(&live, "").unwrap();
    let dot = dir.path().join("idle.dot");
    let started = std::time::Instant::now();
    let out = run(&["watch", p(&live), "--dot-output", p(&dot), "--refresh-ms", "20", "--idle-timeout-ms", "200"]);
    assert_eq!(out.code, 0);
    assert!(started.elapsed() < std::time::Duration::from_secs(5));
    assert!(out.stderr.contains("no new data"), "{}", out.stderr);
    assert!(fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn ingest_reads_trace_tables() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    fs::write(
        &trace,
        "task_id\thash\tnative_id\tname\tstatus\texit\tsubmit\tduration\trealtime\t%cpu\tpeak_rss\tpeak_vmem\trchar\twchar\n\
         1\tab/cdef12\t101\tFASTQC (1)\tCOMPLETED\t0\t2025-01-01 10:00:00.000\t12.5s\t10s\t95.0%\t1 GB\t2 GB\t1 MB\t2 MB\n",
    )
    .unwrap();
    let out = run(&["ingest", p(&trace), "--format", "trace"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["summary"]["task_counts"]["COMPLETED"], 1);
}
