//! Vertex-weighted longest paths.
//!
//! The kernel is generic over the weight scalar so the same code serves
//! integer milliseconds (exact) and floating-point seconds. Ties between
//! equally heavy paths resolve to the lexicographically smallest task-id
//! sequence.

use std::collections::BTreeMap;

use num_traits::Num;
use serde::{Deserialize, Serialize};

use super::{ExecGraph, GraphError};
use crate::event::TaskRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongestPath<W> {
    pub path: Vec<String>,
    pub length: W,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPathReport {
    pub path: Vec<String>,
    pub length_ms: u64,
    pub length_s: f64,
    pub makespan_s: f64,
}

/// Heaviest directed path under `weight`.
///
/// For each vertex (in reverse topological order) keep the heaviest path
/// starting there. Extending through a successor only happens when it adds
/// strictly positive weight: a path is lexicographically smaller than any
/// of its extensions.
pub fn longest_path_by<W, F>(g: &ExecGraph, weight: F) -> Result<LongestPath<W>, GraphError>
where
    W: Num + Copy + PartialOrd,
    F: Fn(&TaskRecord) -> W,
{
    let order = g.topological_order()?;
    // vertex -> (weight of best path starting here, next hop)
    let mut best: BTreeMap<&str, (W, Option<&str>)> = BTreeMap::new();
    for v in order.iter().rev() {
        let own = weight(g.task(v).expect("ordered vertex exists"));
        let mut tail: Option<(W, &str)> = None;
        // Successors come out sorted, so keeping the first maximum keeps the
        // smallest id among equals.
        for s in g.successors(v) {
            let w = best[s].0;
            if tail.is_none_or(|(t, _)| w > t) {
                tail = Some((w, s));
            }
        }
        let entry = match tail {
            Some((w, s)) if w > W::zero() => (own + w, Some(s)),
            _ => (own, None),
        };
        best.insert(v.as_str(), entry);
    }

    let mut start: Option<(&str, W)> = None;
    for (v, (w, _)) in &best {
        if start.is_none_or(|(_, sw)| *w > sw) {
            start = Some((v, *w));
        }
    }
    let Some((first, length)) = start else {
        return Ok(LongestPath { path: Vec::new(), length: W::zero() });
    };
    let mut path = vec![first.to_owned()];
    let mut cur = first;
    while let Some(next) = best[cur].1 {
        path.push(next.to_owned());
        cur = next;
    }
    Ok(LongestPath { path, length })
}

/// Critical path by measured task duration; tasks without a duration weigh 0.
pub fn critical_path(g: &ExecGraph) -> Result<CriticalPathReport, GraphError> {
    let lp = longest_path_by(g, |t| t.duration_ms.unwrap_or(0))?;
    Ok(CriticalPathReport {
        length_s: lp.length as f64 / 1000.0,
        length_ms: lp.length,
        path: lp.path,
        makespan_s: g.makespan_ms() as f64 / 1000.0,
    })
}
