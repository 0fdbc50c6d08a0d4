//! Random flow graphs for property tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use doaflow::graph::{Edge, Emissions, FieldType, FlowGraph, Schema, StreamCategory, Value};
use proptest::prelude::*;

pub const INPUTS: usize = 3;

/// Node `i` reads from inputs or from the output streams of nodes `< i`.
#[derive(Debug, Clone)]
pub struct DagShape {
    /// per node, the source indices it reads (`< INPUTS` is an input stream)
    pub reads: Vec<Vec<usize>>,
    /// per node, its id suffix; shuffled so id order differs from build order
    pub names: Vec<usize>,
}

pub fn dag_shape(max_nodes: usize) -> impl Strategy<Value = DagShape> {
    (1..=max_nodes)
        .prop_flat_map(|n| {
            let reads = (0..n)
                .map(|i| prop::collection::vec(0..INPUTS + i, 1..=3))
                .collect::<Vec<_>>();
            let names = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
            (reads, names)
        })
        .prop_map(|(reads, names)| {
            let reads = reads
                .into_iter()
                .map(|r| r.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
                .collect();
            DagShape { reads, names }
        })
}

pub fn x_schema(name: &str) -> Schema {
    Schema::new(name).field("x", FieldType::Int)
}

impl DagShape {
    pub fn node_id(&self, i: usize) -> String {
        format!("n{:02}", self.names[i])
    }

    pub fn source_id(&self, src: usize) -> String {
        if src < INPUTS {
            format!("in{src}")
        } else {
            format!("s{:02}", self.names[src - INPUTS])
        }
    }

    pub fn used_inputs(&self) -> BTreeSet<usize> {
        self.reads.iter().flatten().copied().filter(|&s| s < INPUTS).collect()
    }

    /// Each node emits `x * 31 + salt` for every new record on every in-port.
    pub fn build(&self) -> FlowGraph {
        let n = self.reads.len();
        let consumed: BTreeSet<usize> = self.reads.iter().flatten().copied().collect();
        let mut g = FlowGraph::new();
        for i in self.used_inputs() {
            g.add_stream(&self.source_id(i), StreamCategory::Input, x_schema("x"));
        }
        for i in 0..n {
            let cat = if consumed.contains(&(INPUTS + i)) {
                StreamCategory::Internal
            } else {
                StreamCategory::Output
            };
            g.add_stream(&self.source_id(INPUTS + i), cat, x_schema("x"));
        }
        for i in 0..n {
            let ports: Vec<(String, String)> = self.reads[i]
                .iter()
                .enumerate()
                .map(|(k, &s)| (format!("in{k}"), self.source_id(s)))
                .collect();
            let port_names: Vec<String> = ports.iter().map(|(p, _)| p.clone()).collect();
            let reads: Vec<(&str, &str)> = ports.iter().map(|(p, s)| (p.as_str(), s.as_str())).collect();
            let out = self.source_id(INPUTS + i);
            let salt = self.names[i] as i64;
            g.wire_node(&self.node_id(i), "v1", &reads, &[("out", out.as_str())], move |ctx| {
                let mut e = Emissions::new();
                for p in &port_names {
                    for r in ctx.port(p)?.delta_rows() {
                        let x = r.int("x")?;
                        e.emit("out", vec![Value::Int(x.wrapping_mul(31).wrapping_add(salt) % 1_000_003)]);
                    }
                }
                Ok(e)
            });
        }
        g
    }
}

/// All element ids of a graph.
pub fn elements(g: &FlowGraph) -> Vec<String> {
    g.streams.iter().map(|s| s.id.clone()).chain(g.nodes.iter().map(|n| n.id.clone())).collect()
}

/// Reachability matrix over wiring edges, by Warshall's algorithm.
pub fn reachability(g: &FlowGraph) -> (Vec<String>, Vec<Vec<bool>>) {
    let ids = elements(g);
    let at = |id: &str| ids.iter().position(|x| x == id).unwrap();
    let n = ids.len();
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for e in &g.edges {
        let (from, to) = match e {
            Edge::Read { stream, node, .. } => (at(stream), at(node)),
            Edge::Write { node, stream, .. } => (at(node), at(stream)),
        };
        r[from][to] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    (ids, r)
}

/// Node-to-node edges through internal streams.
pub fn node_edges(g: &FlowGraph) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for w in &g.edges {
        if let Edge::Write { node: u, stream, .. } = w {
            for r in &g.edges {
                if let Edge::Read { stream: s, node: v, .. } = r {
                    if s == stream {
                        out.push((u.clone(), v.clone()));
                    }
                }
            }
        }
    }
    out
}
