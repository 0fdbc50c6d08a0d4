//! Streams, ports, processing nodes and the dataflow graph that wires them.
//!
//! A [`FlowGraph`] is bipartite: streams on one side, nodes on the other.
//! Wiring lives in the graph, never inside a node, so the whole program can
//! be inspected and traversed without running it.

mod dot;
mod schema;
mod traverse;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dot::export_dot;
pub use schema::{Field, FieldType, Schema, Value};
pub use traverse::{downstream_closure, topological_order, upstream_closure};
pub use validate::{validate, ValidationReport, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    Invalid(Violation),
    #[error("unknown graph element {0}")]
    UnknownElement(String),
}

/// Immutable unit of data appended to a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub tick: u64,
    pub seq: u64,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StreamCategory {
    Input,
    Internal,
    Output,
}

impl fmt::Display for StreamCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StreamCategory::Input => "input",
            StreamCategory::Internal => "internal",
            StreamCategory::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDecl {
    pub id: String,
    pub category: StreamCategory,
    pub schema: Schema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    pub schema: Schema,
}

/// Error raised by a node transform.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct TransformError(pub String);

impl From<String> for TransformError {
    fn from(s: String) -> Self {
        TransformError(s)
    }
}

impl From<&str> for TransformError {
    fn from(s: &str) -> Self {
        TransformError(s.to_string())
    }
}

/// Read-only view of one wired in-port during a node invocation.
#[derive(Debug, Clone, Copy)]
pub struct PortView<'a> {
    pub schema: &'a Schema,
    pub history: &'a [Record],
    pub delta_start: usize,
}

impl<'a> PortView<'a> {
    pub fn delta(&self) -> &'a [Record] {
        &self.history[self.delta_start..]
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'a>> + 'a {
        let schema = self.schema;
        self.history.iter().map(move |record| Row { schema, record })
    }

    pub fn delta_rows(&self) -> impl Iterator<Item = Row<'a>> + 'a {
        let schema = self.schema;
        self.delta().iter().map(move |record| Row { schema, record })
    }
}

/// A record paired with its schema, for field access by name.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub schema: &'a Schema,
    pub record: &'a Record,
}

impl<'a> Row<'a> {
    pub fn get(&self, field: &str) -> Result<&'a Value, TransformError> {
        self.schema
            .index_of(field)
            .and_then(|i| self.record.values.get(i))
            .ok_or_else(|| TransformError(format!("no field {} in {}", field, self.schema.name)))
    }

    pub fn int(&self, field: &str) -> Result<i64, TransformError> {
        self.get(field)?
            .as_int()
            .ok_or_else(|| TransformError(format!("{field} is not an int")))
    }

    pub fn float(&self, field: &str) -> Result<f64, TransformError> {
        self.get(field)?
            .as_float()
            .ok_or_else(|| TransformError(format!("{field} is not numeric")))
    }

    pub fn text(&self, field: &str) -> Result<&'a str, TransformError> {
        self.get(field)?
            .as_text()
            .ok_or_else(|| TransformError(format!("{field} is not text")))
    }

    pub fn bool(&self, field: &str) -> Result<bool, TransformError> {
        self.get(field)?
            .as_bool()
            .ok_or_else(|| TransformError(format!("{field} is not a bool")))
    }

    pub fn tick(&self) -> u64 {
        self.record.tick
    }

    pub fn seq(&self) -> u64 {
        self.record.seq
    }
}

/// Everything a node sees during one invocation.
#[derive(Debug)]
pub struct NodeContext<'a> {
    pub tick: u64,
    pub ports: BTreeMap<&'a str, PortView<'a>>,
}

impl<'a> NodeContext<'a> {
    pub fn port(&self, name: &str) -> Result<PortView<'a>, TransformError> {
        self.ports
            .get(name)
            .copied()
            .ok_or_else(|| TransformError(format!("no in-port {name}")))
    }
}

/// New records produced by one invocation, keyed by out-port.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Emissions {
    pub by_port: BTreeMap<String, Vec<Vec<Value>>>,
}

impl Emissions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(&mut self, port: &str, values: Vec<Value>) {
        self.by_port.entry(port.to_string()).or_default().push(values);
    }

    pub fn is_empty(&self) -> bool {
        self.by_port.values().all(Vec::is_empty)
    }
}

pub type Transform =
    Arc<dyn Fn(&NodeContext<'_>) -> Result<Emissions, TransformError> + Send + Sync>;

/// A stateless processing node. The transform must be a pure function of its context.
#[derive(Clone)]
pub struct NodeSpec {
    pub id: String,
    pub in_ports: Vec<PortDecl>,
    pub out_ports: Vec<PortDecl>,
    pub logic_version: String,
    pub transform: Transform,
}

impl fmt::Debug for NodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeSpec")
            .field("id", &self.id)
            .field("in_ports", &self.in_ports)
            .field("out_ports", &self.out_ports)
            .field("logic_version", &self.logic_version)
            .finish_non_exhaustive()
    }
}

impl NodeSpec {
    pub fn new<F>(id: impl Into<String>, logic_version: impl Into<String>, transform: F) -> Self
    where
        F: Fn(&NodeContext<'_>) -> Result<Emissions, TransformError> + Send + Sync + 'static,
    {
        NodeSpec {
            id: id.into(),
            in_ports: Vec::new(),
            out_ports: Vec::new(),
            logic_version: logic_version.into(),
            transform: Arc::new(transform),
        }
    }

    pub fn in_port(mut self, name: impl Into<String>, schema: Schema) -> Self {
        self.in_ports.push(PortDecl {
            name: name.into(),
            direction: Direction::In,
            schema,
        });
        self
    }

    pub fn out_port(mut self, name: impl Into<String>, schema: Schema) -> Self {
        self.out_ports.push(PortDecl {
            name: name.into(),
            direction: Direction::Out,
            schema,
        });
        self
    }

    pub fn port(&self, direction: Direction, name: &str) -> Option<&PortDecl> {
        let ports = match direction {
            Direction::In => &self.in_ports,
            Direction::Out => &self.out_ports,
        };
        ports.iter().find(|p| p.name == name)
    }
}

/// One wiring edge between a stream and a node port.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Edge {
    /// Stream feeds a node's in-port.
    Read { stream: String, node: String, port: String },
    /// Node's out-port appends to a stream.
    Write { node: String, port: String, stream: String },
}

impl Edge {
    pub fn stream(&self) -> &str {
        match self {
            Edge::Read { stream, .. } | Edge::Write { stream, .. } => stream,
        }
    }

    pub fn node(&self) -> &str {
        match self {
            Edge::Read { node, .. } | Edge::Write { node, .. } => node,
        }
    }

    pub fn port(&self) -> &str {
        match self {
            Edge::Read { port, .. } | Edge::Write { port, .. } => port,
        }
    }
}

/// The whole-program dataflow graph. Element order is insertion order;
/// every derived view (validation, traversal, export) sorts by id.
#[derive(Debug, Clone, Default)]
pub struct FlowGraph {
    pub streams: Vec<StreamDecl>,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<Edge>,
}

impl FlowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_stream(&mut self, id: &str, category: StreamCategory, schema: Schema) -> &mut Self {
        self.streams.push(StreamDecl {
            id: id.to_string(),
            category,
            schema,
        });
        self
    }

    pub fn add_node(&mut self, node: NodeSpec) -> &mut Self {
        self.nodes.push(node);
        self
    }

    pub fn read(&mut self, stream: &str, node: &str, port: &str) -> &mut Self {
        self.edges.push(Edge::Read {
            stream: stream.to_string(),
            node: node.to_string(),
            port: port.to_string(),
        });
        self
    }

    pub fn write(&mut self, node: &str, port: &str, stream: &str) -> &mut Self {
        self.edges.push(Edge::Write {
            node: node.to_string(),
            port: port.to_string(),
            stream: stream.to_string(),
        });
        self
    }

    /// Adds a node whose port schemas are copied from the streams it is
    /// wired to. `reads`/`writes` are `(port, stream)` pairs; streams must
    /// already be declared for their schema to be picked up.
    pub fn wire_node<F>(
        &mut self,
        id: &str,
        logic_version: &str,
        reads: &[(&str, &str)],
        writes: &[(&str, &str)],
        transform: F,
    ) -> &mut Self
    where
        F: Fn(&NodeContext<'_>) -> Result<Emissions, TransformError> + Send + Sync + 'static,
    {
        let mut node = NodeSpec::new(id, logic_version, transform);
        for (port, stream) in reads {
            let schema = self.schema_or_placeholder(stream);
            node = node.in_port(*port, schema);
        }
        for (port, stream) in writes {
            let schema = self.schema_or_placeholder(stream);
            node = node.out_port(*port, schema);
        }
        self.nodes.push(node);
        for (port, stream) in reads {
            self.read(stream, id, port);
        }
        for (port, stream) in writes {
            self.write(id, port, stream);
        }
        self
    }

    fn schema_or_placeholder(&self, stream: &str) -> Schema {
        self.stream(stream)
            .map(|s| s.schema.clone())
            .unwrap_or_else(|| Schema::new(stream))
    }

    pub fn stream(&self, id: &str) -> Option<&StreamDecl> {
        self.streams.iter().find(|s| s.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.stream(id).is_some() || self.node(id).is_some()
    }

    /// Stream wired to the given node port, if any.
    pub fn wired_stream(&self, node: &str, direction: Direction, port: &str) -> Option<&str> {
        self.edges.iter().find_map(|e| match (e, direction) {
            (Edge::Read { stream, node: n, port: p }, Direction::In) if n == node && p == port => {
                Some(stream.as_str())
            }
            (Edge::Write { stream, node: n, port: p }, Direction::Out)
                if n == node && p == port =>
            {
                Some(stream.as_str())
            }
            _ => None,
        })
    }

    /// Node ids that write to `stream`, sorted.
    pub fn producers(&self, stream: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .filter_map(|e| match e {
                Edge::Write { node, stream: s, .. } if s == stream => Some(node.as_str()),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Node ids that read from `stream`, sorted.
    pub fn consumers(&self, stream: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .filter_map(|e| match e {
                Edge::Read { node, stream: s, .. } if s == stream => Some(node.as_str()),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn streams_of(&self, category: StreamCategory) -> Vec<&StreamDecl> {
        let mut out: Vec<&StreamDecl> =
            self.streams.iter().filter(|s| s.category == category).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}
