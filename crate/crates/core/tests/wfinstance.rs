use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use wfmon_core::simulator::{generate_run, DagShape, SimConfig};
use wfmon_core::wfformat::{
    emit_instance, parse_instance, strip_extensions, to_canonical_string, validate_instance, EmitOptions,
};
use wfmon_core::Monitor;

fn emit(cfg: &SimConfig) -> String {
    let m = Monitor::replay(&generate_run(cfg));
    assert!(m.diagnostics().is_empty());
    let opts = EmitOptions { series_path_template: Some("series/{machine}.jsonl".into()) };
    let doc = emit_instance(m.state(), m.graph(), &BTreeMap::new(), &opts).unwrap();
    to_canonical_string(&doc)
}

#[test]
fn simulated_documents_validate_and_round_trip() {
    for seed in 0..25 {
        let shape = [DagShape::Chain, DagShape::ForkJoin, DagShape::LayeredRandom][seed as usize % 3];
        let cfg = SimConfig { seed, task_count: 12, dag_shape: shape, failure_rate: 0.1, ..Default::default() };
        let text = emit(&cfg);
        let doc = parse_instance(&text).unwrap();
        assert_eq!(validate_instance(&doc), vec![]);
        assert_eq!(to_canonical_string(&doc), text);

        let mut plain: Value = serde_json::from_str(&text).unwrap();
        strip_extensions(&mut plain);
        assert!(!plain.to_string().contains("x-monitor"));
        let stripped = parse_instance(&plain.to_string()).unwrap();
        assert_eq!(validate_instance(&stripped), vec![]);
    }
}

#[test]
fn edges_mirror_the_graph() {
    let cfg = SimConfig { seed: 4, task_count: 30, ..Default::default() };
    let m = Monitor::replay(&generate_run(&cfg));
    let doc = emit_instance(m.state(), m.graph(), &BTreeMap::new(), &EmitOptions::default()).unwrap();
    let mut from_children = BTreeSet::new();
    let mut from_parents = BTreeSet::new();
    for t in &doc.workflow.specification.tasks {
        from_children.extend(t.children.iter().map(|c| (t.id.clone(), c.clone())));
        from_parents.extend(t.parents.iter().map(|p| (p.clone(), t.id.clone())));
    }
    assert_eq!(from_children, m.graph().edge_set());
    assert_eq!(from_parents, m.graph().edge_set());
    assert_eq!(doc.workflow.execution.machines.len(), cfg.machine_count);
    assert_eq!(doc.workflow.execution.makespan_in_seconds, m.state().makespan_ms() as f64 / 1000.0);
}

#[test]
fn emission_is_deterministic() {
    let cfg = SimConfig { seed: 8, task_count: 20, ..Default::default() };
    assert_eq!(emit(&cfg), emit(&cfg));
}
