use std::fmt::Write;

use super::{Edge, FlowGraph, StreamCategory};

fn color(category: StreamCategory) -> &'static str {
    match category {
        StreamCategory::Input => "red",
        StreamCategory::Internal => "yellow",
        StreamCategory::Output => "green",
    }
}

fn quote(id: &str) -> String {
    format!("\"{}\"", id.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders the graph as a Graphviz digraph. Nodes are ellipses, streams are
/// filled boxes colored by category. Vertices are sorted by id, edges by
/// (tail, head, port), so output is byte-stable.
pub fn export_dot(graph: &FlowGraph) -> String {
    enum Vertex<'a> {
        Node(&'a str),
        Stream(&'a str, StreamCategory),
    }

    let mut vertices: Vec<(&str, Vertex<'_>)> = graph
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), Vertex::Node(&n.id)))
        .chain(
            graph
                .streams
                .iter()
                .map(|s| (s.id.as_str(), Vertex::Stream(&s.id, s.category))),
        )
        .collect();
    vertices.sort_by(|a, b| a.0.cmp(b.0));

    let mut edges: Vec<(&str, &str, &str)> = graph
        .edges
        .iter()
        .map(|e| match e {
            Edge::Read { stream, node, port } => (stream.as_str(), node.as_str(), port.as_str()),
            Edge::Write { node, port, stream } => (node.as_str(), stream.as_str(), port.as_str()),
        })
        .collect();
    edges.sort();

    let mut out = String::from("digraph flow {\n");
    for (_, v) in &vertices {
        match v {
            Vertex::Node(id) => {
                let _ = writeln!(out, "  {} [shape=ellipse];", quote(id));
            }
            Vertex::Stream(id, cat) => {
                let _ = writeln!(
                    out,
                    "  {} [shape=box, style=filled, fillcolor={}];",
                    quote(id),
                    color(*cat)
                );
            }
        }
    }
    for (from, to, port) in edges {
        let _ = writeln!(out, "  {} -> {} [label={}];", quote(from), quote(to), quote(port));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{chain, copy_node, one_int};
    use super::*;

    #[test]
    fn empty_graph_has_no_statements() {
        assert_eq!(export_dot(&FlowGraph::new()), "digraph flow {\n}\n");
    }

    #[test]
    fn counts_vertices_and_edges() {
        let mut g = FlowGraph::new();
        g.add_stream("i", StreamCategory::Input, one_int())
            .add_stream("o", StreamCategory::Output, one_int());
        g.wire_node("A", "v1", &[("in", "i")], &[("out", "o")], copy_node);
        let dot = export_dot(&g);
        let vertex = dot.lines().filter(|l| l.contains('[') && !l.contains("->")).count();
        let edge = dot.lines().filter(|l| l.contains("->")).count();
        assert_eq!((vertex, edge), (3, 2));
        assert!(dot.contains("\"i\" [shape=box, style=filled, fillcolor=red];"));
        assert!(dot.contains("\"o\" [shape=box, style=filled, fillcolor=green];"));
        assert!(dot.contains("\"A\" [shape=ellipse];"));
    }

    #[test]
    fn export_is_deterministic() {
        let g = chain();
        assert_eq!(export_dot(&g), export_dot(&g));
        assert!(export_dot(&g).contains("fillcolor=yellow"));
    }
}
