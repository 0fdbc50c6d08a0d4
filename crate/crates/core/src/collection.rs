//! Dataset assembly over stream logs.
//!
//! A label stream and a set of feature streams are joined on a correlation
//! key into `(X, y)` rows. Candidate feature streams are found by walking the
//! graph upstream from the label, so nothing has to be logged by hand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{upstream_closure, FieldType, FlowGraph, GraphError, Record, StreamCategory, Value};
use crate::runtime::RuntimeInstance;

#[derive(Debug, Error)]
pub enum CollectionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("unknown stream {0}")]
    UnknownStream(String),
    #[error("stream {stream} has no field {field}")]
    UnknownField { stream: String, field: String },
    #[error("key fields disagree on type: {0}")]
    KeyType(String),
    #[error("field name {0} selected twice")]
    DuplicateField(String),
    #[error("key {key} appears more than once in stream {stream}")]
    DuplicateKey { stream: String, key: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("row value is not serializable: {0}")]
    Unserializable(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Which fields to take from one stream, and the field holding its join key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub stream: String,
    pub fields: Vec<String>,
    pub key: String,
}

impl Selection {
    pub fn new(stream: &str, fields: &[&str], key: &str) -> Self {
        Selection {
            stream: stream.to_string(),
            fields: fields.iter().map(|f| f.to_string()).collect(),
            key: key.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionSpec {
    pub dataset_name: String,
    pub label: Selection,
    pub features: Vec<Selection>,
}

/// One `(X, y)` pair. Field order is alphabetical so the derived
/// serialization already has sorted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub features: BTreeMap<String, Value>,
    pub key: Value,
    pub label: BTreeMap<String, Value>,
}

/// Input and Internal streams upstream of `label_stream`, sorted by id.
pub fn discover_sources(graph: &FlowGraph, label_stream: &str) -> Result<Vec<String>, CollectionError> {
    if graph.stream(label_stream).is_none() {
        return Err(CollectionError::UnknownStream(label_stream.to_string()));
    }
    let closure = upstream_closure(graph, label_stream)?;
    Ok(closure
        .into_iter()
        .filter(|id| id != label_stream)
        .filter(|id| {
            graph.stream(id).is_some_and(|s| {
                matches!(s.category, StreamCategory::Input | StreamCategory::Internal)
            })
        })
        .collect())
}

/// Checks that every stream and field the spec names exists, keys share one
/// type and selected field names do not collide.
pub fn check_spec(graph: &FlowGraph, spec: &CollectionSpec) -> Result<(), CollectionError> {
    let mut key_type: Option<FieldType> = None;
    let mut names = BTreeSet::new();
    for sel in std::iter::once(&spec.label).chain(&spec.features) {
        let stream = graph
            .stream(&sel.stream)
            .ok_or_else(|| CollectionError::UnknownStream(sel.stream.clone()))?;
        let field_type = |f: &str| {
            stream
                .schema
                .field_type(f)
                .ok_or_else(|| CollectionError::UnknownField {
                    stream: sel.stream.clone(),
                    field: f.to_string(),
                })
        };
        let kt = field_type(&sel.key)?;
        match key_type {
            None => key_type = Some(kt),
            Some(t) if t != kt => {
                return Err(CollectionError::KeyType(format!(
                    "{}.{} is {kt}, expected {t}",
                    sel.stream, sel.key
                )))
            }
            Some(_) => {}
        }
        for f in &sel.fields {
            field_type(f)?;
            if !names.insert(f.as_str()) {
                return Err(CollectionError::DuplicateField(f.clone()));
            }
        }
    }
    Ok(())
}

fn key_string(v: &Value) -> String {
    v.to_json().to_string()
}

/// key -> record, rejecting repeated keys.
fn index_by_key<'a>(
    instance: &'a RuntimeInstance,
    sel: &Selection,
) -> Result<(BTreeMap<String, &'a Record>, usize, Vec<usize>), CollectionError> {
    let log = instance
        .log(&sel.stream)
        .ok_or_else(|| CollectionError::UnknownStream(sel.stream.clone()))?;
    let schema = &log.decl.schema;
    let lookup = |f: &str| {
        schema.index_of(f).ok_or_else(|| CollectionError::UnknownField {
            stream: sel.stream.clone(),
            field: f.to_string(),
        })
    };
    let key_idx = lookup(&sel.key)?;
    let field_idx = sel.fields.iter().map(|f| lookup(f)).collect::<Result<Vec<_>, _>>()?;
    let mut index = BTreeMap::new();
    for r in &log.records {
        let k = key_string(&r.values[key_idx]);
        if index.insert(k.clone(), r).is_some() {
            return Err(CollectionError::DuplicateKey {
                stream: sel.stream.clone(),
                key: k,
            });
        }
    }
    Ok((index, key_idx, field_idx))
}

/// Inner join of the label stream with every feature stream on the key.
/// Rows follow label-record order; label keys missing from any feature
/// stream are dropped.
pub fn collect(instance: &RuntimeInstance, spec: &CollectionSpec) -> Result<Vec<DatasetRow>, CollectionError> {
    check_spec(instance.graph(), spec)?;
    let (_, label_key, label_fields) = index_by_key(instance, &spec.label)?;
    let features = spec
        .features
        .iter()
        .map(|sel| index_by_key(instance, sel).map(|(idx, _, fields)| (sel, idx, fields)))
        .collect::<Result<Vec<_>, _>>()?;

    let label_log = instance.log(&spec.label.stream).expect("checked above");
    let mut rows = Vec::new();
    'label: for r in &label_log.records {
        let key = r.values[label_key].clone();
        let ks = key_string(&key);
        let mut feats = BTreeMap::new();
        for (sel, idx, fields) in &features {
            let Some(fr) = idx.get(&ks) else { continue 'label };
            for (name, &i) in sel.fields.iter().zip(fields) {
                feats.insert(name.clone(), fr.values[i].clone());
            }
        }
        let label = spec
            .label
            .fields
            .iter()
            .zip(&label_fields)
            .map(|(name, &i)| (name.clone(), r.values[i].clone()))
            .collect();
        rows.push(DatasetRow {
            features: feats,
            key,
            label,
        });
    }
    Ok(rows)
}

fn check_finite(row: &DatasetRow) -> Result<(), CollectionError> {
    let all = std::iter::once(&row.key)
        .chain(row.features.values())
        .chain(row.label.values());
    for v in all {
        if let Value::Float(x) = v {
            if !x.is_finite() {
                return Err(CollectionError::Unserializable(format!("{x}")));
            }
        }
    }
    Ok(())
}

/// Canonical JSON-Lines text for `rows`: sorted keys, shortest round-trip floats, LF endings.
pub fn to_jsonl(rows: &[DatasetRow]) -> Result<String, CollectionError> {
    let mut out = String::new();
    for row in rows {
        check_finite(row)?;
        out.push_str(&serde_json::to_string(row).map_err(|e| CollectionError::Unserializable(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl(text: &str) -> Result<Vec<DatasetRow>, CollectionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CollectionError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Writes rows to `path`, returning how many were written.
pub fn write_dataset(rows: &[DatasetRow], path: &Path) -> Result<usize, CollectionError> {
    let text = to_jsonl(rows)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(rows.len())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRow>, CollectionError> {
    from_jsonl(&fs::read_to_string(path)?)
}
