//! Deterministic tick executor for a validated [`FlowGraph`].
//!
//! The runtime owns every stream log and every read cursor, so nodes stay
//! stateless: on each tick a node sees the full history of each wired
//! stream plus the range it has not consumed yet.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{
    topological_order, validate, Direction, FlowGraph, NodeContext, PortView, Record,
    StreamCategory, StreamDecl, Value, Violation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("graph rejected at startup: {0}")]
    InvalidGraph(Violation),
    #[error("unknown stream {0}")]
    UnknownStream(String),
    #[error("{0} is not an input stream")]
    NotInput(String),
    #[error("record for {stream} rejected: {reason}")]
    SchemaMismatch { stream: String, reason: String },
    #[error("node {node} emitted on port {port}: {reason}")]
    EmitViolation {
        node: String,
        port: String,
        reason: String,
    },
    #[error("node {node} failed: {message}")]
    Transform { node: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    pub ticks: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(ticks: u64, seed: u64) -> Option<Self> {
        (ticks >= 1).then_some(RunConfig { ticks, seed })
    }
}

/// Append-only record log for one stream. Seq numbers are gapless from 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamLog {
    pub decl: StreamDecl,
    pub records: Vec<Record>,
}

impl StreamLog {
    fn append(&mut self, tick: u64, values: Vec<Value>) -> &Record {
        let seq = self.records.len() as u64;
        self.records.push(Record { tick, seq, values });
        self.records.last().expect("just pushed")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TickSummary {
    pub tick: u64,
    pub produced: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct RuntimeInstance {
    graph: Arc<FlowGraph>,
    order: Vec<usize>,
    logs: BTreeMap<String, StreamLog>,
    /// (node, stream) -> records consumed so far
    cursors: BTreeMap<(String, String), usize>,
    invocations: BTreeMap<String, u64>,
    tick: u64,
}

impl RuntimeInstance {
    /// Validates the graph, freezes its topological order and creates empty logs.
    pub fn start(graph: impl Into<Arc<FlowGraph>>) -> Result<Self, RuntimeError> {
        let graph = graph.into();
        if let Some(v) = validate(&graph).first() {
            return Err(RuntimeError::InvalidGraph(v.clone()));
        }
        let order = topological_order(&graph)
            .map_err(|e| match e {
                crate::graph::GraphError::Invalid(v) => RuntimeError::InvalidGraph(v),
                crate::graph::GraphError::UnknownElement(id) => RuntimeError::UnknownStream(id),
            })?
            .iter()
            .map(|id| {
                graph
                    .nodes
                    .iter()
                    .position(|n| &n.id == id)
                    .expect("ordered id is a node")
            })
            .collect();
        let logs = graph
            .streams
            .iter()
            .map(|s| {
                (
                    s.id.clone(),
                    StreamLog {
                        decl: s.clone(),
                        records: Vec::new(),
                    },
                )
            })
            .collect();
        let mut cursors = BTreeMap::new();
        for n in &graph.nodes {
            for p in &n.in_ports {
                if let Some(s) = graph.wired_stream(&n.id, Direction::In, &p.name) {
                    cursors.insert((n.id.clone(), s.to_string()), 0);
                }
            }
        }
        let invocations = graph.nodes.iter().map(|n| (n.id.clone(), 0)).collect();
        Ok(RuntimeInstance {
            graph,
            order,
            logs,
            cursors,
            invocations,
            tick: 0,
        })
    }

    pub fn graph(&self) -> &FlowGraph {
        &self.graph
    }

    /// Current tick; records injected now carry this tick.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.graph.nodes[i].id.as_str()).collect()
    }

    /// Appends a record from the outside world to an Input stream.
    pub fn inject(&mut self, stream: &str, values: Vec<Value>) -> Result<Record, RuntimeError> {
        let tick = self.tick;
        let log = self
            .logs
            .get_mut(stream)
            .ok_or_else(|| RuntimeError::UnknownStream(stream.to_string()))?;
        if log.decl.category != StreamCategory::Input {
            return Err(RuntimeError::NotInput(stream.to_string()));
        }
        log.decl
            .schema
            .check(&values)
            .map_err(|reason| RuntimeError::SchemaMismatch {
                stream: stream.to_string(),
                reason,
            })?;
        Ok(log.append(tick, values).clone())
    }

    /// Runs every node once in topological order, then advances the tick.
    pub fn step(&mut self) -> Result<TickSummary, RuntimeError> {
        let graph = Arc::clone(&self.graph);
        let mut produced: BTreeMap<String, usize> = BTreeMap::new();

        for &idx in &self.order {
            let node = &graph.nodes[idx];
            let emissions = {
                let mut ports = BTreeMap::new();
                for p in &node.in_ports {
                    let stream = graph
                        .wired_stream(&node.id, Direction::In, &p.name)
                        .expect("validated graph wires every port");
                    let log = &self.logs[stream];
                    let delta_start = self.cursors[&(node.id.clone(), stream.to_string())];
                    ports.insert(
                        p.name.as_str(),
                        PortView {
                            schema: &p.schema,
                            history: &log.records,
                            delta_start,
                        },
                    );
                }
                let ctx = NodeContext {
                    tick: self.tick,
                    ports,
                };
                (node.transform)(&ctx).map_err(|e| RuntimeError::Transform {
                    node: node.id.clone(),
                    message: e.0,
                })?
            };
            *self.invocations.get_mut(&node.id).expect("known node") += 1;

            // Check everything before appending anything.
            for (port, batch) in &emissions.by_port {
                let decl = node.port(Direction::Out, port).ok_or_else(|| {
                    RuntimeError::EmitViolation {
                        node: node.id.clone(),
                        port: port.clone(),
                        reason: "no such out-port".into(),
                    }
                })?;
                for values in batch {
                    decl.schema
                        .check(values)
                        .map_err(|reason| RuntimeError::EmitViolation {
                            node: node.id.clone(),
                            port: port.clone(),
                            reason,
                        })?;
                }
            }
            for (port, batch) in emissions.by_port {
                let stream = graph
                    .wired_stream(&node.id, Direction::Out, &port)
                    .expect("validated graph wires every port")
                    .to_string();
                let log = self.logs.get_mut(&stream).expect("wired stream exists");
                let n = batch.len();
                for values in batch {
                    log.append(self.tick, values);
                }
                *produced.entry(stream).or_default() += n;
            }
            for ((n, s), pos) in self.cursors.iter_mut() {
                if n == &node.id {
                    *pos = self.logs[s].records.len();
                }
            }
        }

        let summary = TickSummary {
            tick: self.tick,
            produced,
        };
        self.tick += 1;
        Ok(summary)
    }

    /// Records of `stream` from `from_seq` onwards. Never mutates.
    pub fn read(&self, stream: &str, from_seq: usize) -> Result<&[Record], RuntimeError> {
        let log = self
            .logs
            .get(stream)
            .ok_or_else(|| RuntimeError::UnknownStream(stream.to_string()))?;
        Ok(log.records.get(from_seq..).unwrap_or(&[]))
    }

    pub fn log(&self, stream: &str) -> Option<&StreamLog> {
        self.logs.get(stream)
    }

    pub fn logs(&self) -> impl Iterator<Item = &StreamLog> {
        self.logs.values()
    }

    pub fn cursor(&self, node: &str, stream: &str) -> Option<usize> {
        self.cursors
            .get(&(node.to_string(), stream.to_string()))
            .copied()
    }

    pub fn invocations(&self, node: &str) -> Option<u64> {
        self.invocations.get(node).copied()
    }

    /// Canonical JSON of every stream log, sorted by stream id.
    pub fn snapshot(&self) -> String {
        let logs: BTreeMap<&str, &Vec<Record>> =
            self.logs.iter().map(|(k, v)| (k.as_str(), &v.records)).collect();
        serde_json::to_string(&logs).expect("records serialize")
    }
}
