use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{Direction, Edge, FlowGraph, StreamCategory};

/// One broken wiring or category rule, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Violation {
    DuplicateId(String),
    BadSchema { element: String, problem: String },
    DuplicatePort { node: String, port: String },
    UnwiredPort { node: String, port: String },
    PortWiredTwice { node: String, port: String },
    UnknownStream { node: String, port: String, stream: String },
    UnknownNode { stream: String, node: String },
    UnknownPort { node: String, port: String },
    SchemaMismatch { node: String, port: String, stream: String },
    InputHasProducer { stream: String },
    OutputHasConsumer { stream: String },
    InternalProducerCount { stream: String, count: usize },
    InternalWithoutConsumer { stream: String },
    Cycle { nodes: Vec<String> },
    OrphanNode { node: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Violation::BadSchema { element, problem } => write!(f, "bad schema on {element}: {problem}"),
            Violation::DuplicatePort { node, port } => write!(f, "duplicate port {node}.{port}"),
            Violation::UnwiredPort { node, port } => write!(f, "unwired port {node}.{port}"),
            Violation::PortWiredTwice { node, port } => write!(f, "port {node}.{port} wired more than once"),
            Violation::UnknownStream { node, port, stream } => {
                write!(f, "port {node}.{port} wired to unknown stream {stream}")
            }
            Violation::UnknownNode { stream, node } => write!(f, "stream {stream} wired to unknown node {node}"),
            Violation::UnknownPort { node, port } => write!(f, "edge names undeclared port {node}.{port}"),
            Violation::SchemaMismatch { node, port, stream } => {
                write!(f, "schema of port {node}.{port} differs from stream {stream}")
            }
            Violation::InputHasProducer { stream } => write!(f, "input stream {stream} has a producer"),
            Violation::OutputHasConsumer { stream } => write!(f, "output stream {stream} has a consumer"),
            Violation::InternalProducerCount { stream, count } => {
                write!(f, "internal stream {stream} has {count} producers, expected 1")
            }
            Violation::InternalWithoutConsumer { stream } => write!(f, "internal stream {stream} has no consumer"),
            Violation::Cycle { nodes } => write!(f, "cycle through {{{}}}", nodes.join(", ")),
            Violation::OrphanNode { node } => write!(f, "orphan node {node}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Checks every wiring and stream-category rule. Violations are returned
/// sorted; an empty report means the graph may be executed.
///
/// Connectivity rule: every node must be reachable from an Input stream,
/// and every node with out-ports must reach an Output stream. Nodes without
/// out-ports are taps (for example dataset collectors) and only need the
/// first half.
pub fn validate(graph: &FlowGraph) -> ValidationReport {
    let mut v: BTreeSet<Violation> = BTreeSet::new();

    let mut ids = BTreeSet::new();
    for id in graph
        .streams
        .iter()
        .map(|s| &s.id)
        .chain(graph.nodes.iter().map(|n| &n.id))
    {
        if !ids.insert(id.as_str()) {
            v.insert(Violation::DuplicateId(id.clone()));
        }
    }

    for s in &graph.streams {
        for problem in s.schema.problems() {
            v.insert(Violation::BadSchema {
                element: s.id.clone(),
                problem,
            });
        }
    }

    // Port declarations and wiring counts.
    let mut wiring: BTreeMap<(&str, Direction, &str), usize> = BTreeMap::new();
    let mut has_unwired: BTreeSet<&str> = BTreeSet::new();
    for n in &graph.nodes {
        for (dir, ports) in [(Direction::In, &n.in_ports), (Direction::Out, &n.out_ports)] {
            let mut seen = BTreeSet::new();
            for p in ports {
                if !seen.insert(p.name.as_str()) {
                    v.insert(Violation::DuplicatePort {
                        node: n.id.clone(),
                        port: p.name.clone(),
                    });
                }
                wiring.entry((n.id.as_str(), dir, p.name.as_str())).or_insert(0);
            }
        }
    }

    for e in &graph.edges {
        let (dir, node_id, port_name, stream_id) = match e {
            Edge::Read { stream, node, port } => (Direction::In, node, port, stream),
            Edge::Write { node, port, stream } => (Direction::Out, node, port, stream),
        };
        let Some(node) = graph.node(node_id) else {
            v.insert(Violation::UnknownNode {
                stream: stream_id.clone(),
                node: node_id.clone(),
            });
            continue;
        };
        let Some(port) = node.port(dir, port_name) else {
            v.insert(Violation::UnknownPort {
                node: node_id.clone(),
                port: port_name.clone(),
            });
            continue;
        };
        if let Some(count) = wiring.get_mut(&(node.id.as_str(), dir, port.name.as_str())) {
            *count += 1;
        }
        match graph.stream(stream_id) {
            None => {
                v.insert(Violation::UnknownStream {
                    node: node_id.clone(),
                    port: port_name.clone(),
                    stream: stream_id.clone(),
                });
            }
            Some(stream) if stream.schema != port.schema => {
                v.insert(Violation::SchemaMismatch {
                    node: node_id.clone(),
                    port: port_name.clone(),
                    stream: stream_id.clone(),
                });
            }
            Some(_) => {}
        }
    }

    for ((node, _, port), count) in &wiring {
        match count {
            0 => {
                has_unwired.insert(node);
                v.insert(Violation::UnwiredPort {
                    node: node.to_string(),
                    port: port.to_string(),
                });
            }
            1 => {}
            _ => {
                v.insert(Violation::PortWiredTwice {
                    node: node.to_string(),
                    port: port.to_string(),
                });
            }
        }
    }

    for s in &graph.streams {
        let producers = graph.producers(&s.id).len();
        let consumers = graph.consumers(&s.id).len();
        match s.category {
            StreamCategory::Input if producers > 0 => {
                v.insert(Violation::InputHasProducer { stream: s.id.clone() });
            }
            StreamCategory::Output if consumers > 0 => {
                v.insert(Violation::OutputHasConsumer { stream: s.id.clone() });
            }
            StreamCategory::Internal => {
                if producers != 1 {
                    v.insert(Violation::InternalProducerCount {
                        stream: s.id.clone(),
                        count: producers,
                    });
                }
                if consumers == 0 {
                    v.insert(Violation::InternalWithoutConsumer { stream: s.id.clone() });
                }
            }
            _ => {}
        }
    }

    let cycles = node_cycles(graph);
    let in_cycle: BTreeSet<String> = cycles.iter().flatten().cloned().collect();
    for nodes in cycles {
        v.insert(Violation::Cycle { nodes });
    }

    let from_inputs = reachable_from_inputs(graph);
    let reaches_output = reaching_outputs(graph);
    for n in &graph.nodes {
        if has_unwired.contains(n.id.as_str()) || in_cycle.contains(&n.id) {
            continue;
        }
        let fed = from_inputs.contains(n.id.as_str());
        let drains = n.out_ports.is_empty() || reaches_output.contains(n.id.as_str());
        if !fed || !drains {
            v.insert(Violation::OrphanNode { node: n.id.clone() });
        }
    }

    ValidationReport {
        violations: v.into_iter().collect(),
    }
}

/// Node -> successor nodes through any shared stream.
pub(super) fn node_successors(graph: &FlowGraph) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for n in &graph.nodes {
        succ.entry(n.id.as_str()).or_default();
    }
    for e in &graph.edges {
        if let Edge::Write { node, stream, .. } = e {
            for consumer in graph.consumers(stream) {
                succ.entry(node.as_str()).or_default().insert(consumer);
            }
        }
    }
    succ
}

/// Strongly connected components that form cycles (size > 1 or self-loop),
/// each as a sorted list of node ids.
fn node_cycles(graph: &FlowGraph) -> Vec<Vec<String>> {
    let succ = node_successors(graph);
    let mut pred: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (&u, vs) in &succ {
        pred.entry(u).or_default();
        for &w in vs {
            pred.entry(w).or_default().insert(u);
        }
    }

    // Kosaraju: finish order on the forward graph, then collect on the reverse.
    let mut visited = BTreeSet::new();
    let mut order = Vec::new();
    for &start in succ.keys() {
        if visited.contains(start) {
            continue;
        }
        let mut stack = vec![(start, false)];
        while let Some((u, done)) = stack.pop() {
            if done {
                order.push(u);
                continue;
            }
            if !visited.insert(u) {
                continue;
            }
            stack.push((u, true));
            for &w in succ.get(u).into_iter().flatten() {
                if !visited.contains(w) {
                    stack.push((w, false));
                }
            }
        }
    }

    let mut assigned = BTreeSet::new();
    let mut out = Vec::new();
    for &root in order.iter().rev() {
        if assigned.contains(root) {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![root];
        assigned.insert(root);
        while let Some(u) = stack.pop() {
            comp.push(u.to_string());
            for &w in pred.get(u).into_iter().flatten() {
                if assigned.insert(w) {
                    stack.push(w);
                }
            }
        }
        let self_loop = comp.len() == 1 && succ.get(root).is_some_and(|s| s.contains(root));
        if comp.len() > 1 || self_loop {
            comp.sort();
            out.push(comp);
        }
    }
    out.sort();
    out
}

fn reachable_from_inputs(graph: &FlowGraph) -> BTreeSet<&str> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack: Vec<&str> = graph
        .streams
        .iter()
        .filter(|s| s.category == StreamCategory::Input)
        .map(|s| s.id.as_str())
        .collect();
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            continue;
        }
        for e in &graph.edges {
            match e {
                Edge::Read { stream, node, .. } if stream == id => stack.push(node),
                Edge::Write { node, stream, .. } if node == id => stack.push(stream),
                _ => {}
            }
        }
    }
    seen
}

fn reaching_outputs(graph: &FlowGraph) -> BTreeSet<&str> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack: Vec<&str> = graph
        .streams
        .iter()
        .filter(|s| s.category == StreamCategory::Output)
        .map(|s| s.id.as_str())
        .collect();
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            continue;
        }
        for e in &graph.edges {
            match e {
                Edge::Write { node, stream, .. } if stream == id => stack.push(node),
                Edge::Read { stream, node, .. } if node == id => stack.push(stream),
                _ => {}
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{chain, copy_node, one_int};
    use super::super::{FlowGraph, NodeSpec, Schema, FieldType};
    use super::*;

    #[test]
    fn minimal_graph_is_valid() {
        let mut g = FlowGraph::new();
        g.add_stream("i", StreamCategory::Input, one_int())
            .add_stream("o", StreamCategory::Output, one_int());
        g.wire_node("A", "v1", &[("in", "i")], &[("out", "o")], copy_node);
        assert!(validate(&g).is_empty(), "{:?}", validate(&g));
        assert!(validate(&chain()).is_empty());
    }

    #[test]
    fn unwired_in_port_is_reported_once() {
        let mut g = FlowGraph::new();
        g.add_stream("i", StreamCategory::Input, one_int())
            .add_stream("o", StreamCategory::Output, one_int());
        g.add_node(
            NodeSpec::new("A", "v1", copy_node)
                .in_port("in", one_int())
                .out_port("out", one_int()),
        );
        g.write("A", "out", "o");
        let report = validate(&g);
        let unwired: Vec<String> = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::UnwiredPort { .. }))
            .map(|v| v.to_string())
            .collect();
        assert_eq!(unwired, vec!["unwired port A.in".to_string()]);
    }

    #[test]
    fn two_node_cycle_is_one_violation() {
        let mut g = FlowGraph::new();
        g.add_stream("s", StreamCategory::Internal, one_int())
            .add_stream("t", StreamCategory::Internal, one_int());
        g.wire_node("A", "v1", &[("in", "t")], &[("out", "s")], copy_node);
        g.wire_node("B", "v1", &[("in", "s")], &[("out", "t")], copy_node);
        let cycles: Vec<_> = validate(&g)
            .violations
            .into_iter()
            .filter(|v| matches!(v, Violation::Cycle { .. }))
            .collect();
        assert_eq!(
            cycles,
            vec![Violation::Cycle {
                nodes: vec!["A".into(), "B".into()]
            }]
        );
    }

    #[test]
    fn category_rules() {
        let mut g = chain();
        // consumer on an output stream, second producer on an internal stream
        g.wire_node("C", "v1", &[("in", "o")], &[("out", "s")], copy_node);
        let report = validate(&g);
        assert!(report.violations.contains(&Violation::OutputHasConsumer { stream: "o".into() }));
        assert!(report.violations.contains(&Violation::InternalProducerCount {
            stream: "s".into(),
            count: 2
        }));
    }

    #[test]
    fn schema_mismatch_and_unknown_stream() {
        let mut g = chain();
        let other = Schema::new("y").field("y", FieldType::Text);
        g.add_node(NodeSpec::new("D", "v1", copy_node).in_port("in", other));
        g.read("i", "D", "in");
        g.wire_node("E", "v1", &[("in", "nope")], &[], copy_node);
        let report = validate(&g);
        assert!(report.violations.contains(&Violation::SchemaMismatch {
            node: "D".into(),
            port: "in".into(),
            stream: "i".into()
        }));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::UnknownStream { stream, .. } if stream == "nope")));
    }

    #[test]
    fn orphans_and_duplicates() {
        let mut g = chain();
        g.add_stream("A", StreamCategory::Output, one_int());
        g.add_stream("lonely_in", StreamCategory::Internal, one_int());
        let report = validate(&g);
        assert!(report.violations.contains(&Violation::DuplicateId("A".into())));
        assert!(report
            .violations
            .contains(&Violation::InternalProducerCount { stream: "lonely_in".into(), count: 0 }));

        // node fed by nothing reachable from an input
        let mut g = chain();
        g.add_stream("x", StreamCategory::Output, one_int());
        g.add_node(NodeSpec::new("Z", "v1", copy_node).out_port("out", one_int()));
        g.write("Z", "out", "x");
        assert!(validate(&g).violations.contains(&Violation::OrphanNode { node: "Z".into() }));
    }

    #[test]
    fn tap_node_without_outputs_is_allowed() {
        let mut g = chain();
        g.wire_node("tap", "v1", &[("in", "s")], &[], |_| Ok(Default::default()));
        assert!(validate(&g).is_empty(), "{:?}", validate(&g));
    }

    #[test]
    fn validate_is_idempotent() {
        let g = chain();
        assert_eq!(validate(&g), validate(&g));
    }
}
