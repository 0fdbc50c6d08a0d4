use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::validate::{node_successors, validate};
use super::{Edge, FlowGraph, GraphError};

/// Kahn's algorithm with an ordered ready-set: among nodes whose
/// predecessors have all been emitted, the smallest id goes first.
pub fn topological_order(graph: &FlowGraph) -> Result<Vec<String>, GraphError> {
    let report = validate(graph);
    if let Some(v) = report.first() {
        return Err(GraphError::Invalid(v.clone()));
    }

    let succ = node_successors(graph);
    let mut indegree: BTreeMap<&str, usize> = succ.keys().map(|&k| (k, 0)).collect();
    for vs in succ.values() {
        for &w in vs {
            *indegree.entry(w).or_default() += 1;
        }
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&k, _)| k)
        .collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(u) = ready.pop_first() {
        order.push(u.to_string());
        for &w in &succ[u] {
            let d = indegree.get_mut(w).expect("successor is a node");
            *d -= 1;
            if *d == 0 {
                ready.insert(w);
            }
        }
    }
    Ok(order)
}

/// Every stream and node from which `target` can be reached along wiring
/// edges, `target` included.
pub fn upstream_closure(graph: &FlowGraph, target: &str) -> Result<BTreeSet<String>, GraphError> {
    closure(graph, target, true)
}

/// Every stream and node reachable from `source`, `source` included.
pub fn downstream_closure(graph: &FlowGraph, source: &str) -> Result<BTreeSet<String>, GraphError> {
    closure(graph, source, false)
}

fn closure(graph: &FlowGraph, start: &str, backwards: bool) -> Result<BTreeSet<String>, GraphError> {
    if !graph.contains(start) {
        return Err(GraphError::UnknownElement(start.to_string()));
    }
    // element -> neighbours in the requested direction
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &graph.edges {
        let (from, to) = match e {
            Edge::Read { stream, node, .. } => (stream.as_str(), node.as_str()),
            Edge::Write { node, stream, .. } => (node.as_str(), stream.as_str()),
        };
        let (a, b) = if backwards { (to, from) } else { (from, to) };
        adj.entry(a).or_default().push(b);
    }

    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id.to_string()) {
            continue;
        }
        for &next in adj.get(id).into_iter().flatten() {
            if !seen.contains(next) {
                queue.push_back(next);
            }
        }
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{chain, copy_node, fork, one_int};
    use super::super::{FlowGraph, StreamCategory};
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chain_order() {
        assert_eq!(topological_order(&chain()).unwrap(), vec!["A", "B"]);
    }

    #[test]
    fn independent_nodes_tie_break_by_id() {
        let mut g = FlowGraph::new();
        g.add_stream("i", StreamCategory::Input, one_int())
            .add_stream("s1", StreamCategory::Internal, one_int())
            .add_stream("s2", StreamCategory::Internal, one_int())
            .add_stream("o", StreamCategory::Output, one_int());
        // declared out of order on purpose
        g.wire_node("C", "v1", &[("a", "s1"), ("b", "s2")], &[("out", "o")], copy_node);
        g.wire_node("B", "v1", &[("in", "i")], &[("out", "s2")], copy_node);
        g.wire_node("A", "v1", &[("in", "i")], &[("out", "s1")], copy_node);
        assert_eq!(topological_order(&g).unwrap(), vec!["A", "B", "C"]);
    }

    #[test]
    fn diamond_order() {
        let mut g = FlowGraph::new();
        for (id, cat) in [
            ("i", StreamCategory::Input),
            ("ab", StreamCategory::Internal),
            ("ac", StreamCategory::Internal),
            ("bd", StreamCategory::Internal),
            ("cd", StreamCategory::Internal),
            ("o", StreamCategory::Output),
        ] {
            g.add_stream(id, cat, one_int());
        }
        g.wire_node("D", "v1", &[("b", "bd"), ("c", "cd")], &[("out", "o")], copy_node);
        g.wire_node("C", "v1", &[("in", "ac")], &[("out", "cd")], copy_node);
        g.wire_node("B", "v1", &[("in", "ab")], &[("out", "bd")], copy_node);
        g.wire_node("A", "v1", &[("in", "i")], &[("x", "ab"), ("y", "ac")], copy_node);
        assert_eq!(topological_order(&g).unwrap(), vec!["A", "B", "C", "D"]);
    }

    #[test]
    fn invalid_graph_is_rejected() {
        let mut g = chain();
        g.wire_node("X", "v1", &[("in", "missing")], &[], copy_node);
        assert!(matches!(topological_order(&g), Err(GraphError::Invalid(_))));
    }

    #[test]
    fn closures_on_chain() {
        let g = chain();
        assert_eq!(upstream_closure(&g, "o").unwrap(), set(&["o", "B", "s", "A", "i"]));
        assert_eq!(upstream_closure(&g, "i").unwrap(), set(&["i"]));
        assert_eq!(downstream_closure(&g, "i").unwrap(), set(&["i", "A", "s", "B", "o"]));
        assert_eq!(downstream_closure(&g, "o").unwrap(), set(&["o"]));
    }

    #[test]
    fn closures_on_fork() {
        let g = fork();
        assert_eq!(upstream_closure(&g, "o1").unwrap(), set(&["o1", "B", "s1", "A", "i"]));
        assert_eq!(downstream_closure(&g, "s2").unwrap(), set(&["s2", "C", "o2"]));
    }

    #[test]
    fn unknown_target() {
        assert_eq!(
            upstream_closure(&chain(), "zzz"),
            Err(GraphError::UnknownElement("zzz".into()))
        );
    }
}
