//! Component manifests and the affected-components diff between versions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apps::{build_fbp, build_soa, AppVersion, BuildConfig, Paradigm};
use crate::graph::{Direction, FlowGraph};
use crate::soa::ServiceSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentManifest {
    pub version_key: String,
    /// component id -> fingerprint
    pub components: BTreeMap<String, String>,
}

impl ComponentManifest {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDiff {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub changed: BTreeSet<String>,
    pub affected_count: usize,
}

impl ComponentDiff {
    /// One `status  id` line per component sorted by id, then the count.
    pub fn table(&self) -> String {
        let mut rows: Vec<(&str, &str)> = Vec::new();
        rows.extend(self.added.iter().map(|c| (c.as_str(), "added")));
        rows.extend(self.removed.iter().map(|c| (c.as_str(), "removed")));
        rows.extend(self.changed.iter().map(|c| (c.as_str(), "changed")));
        rows.sort();
        let mut out = String::new();
        for (id, status) in rows {
            let _ = writeln!(out, "{status:<8} {id}");
        }
        let _ = writeln!(out, "affected_count {}", self.affected_count);
        out
    }
}

fn fingerprint(descriptor: &str) -> String {
    hex::encode(Sha256::digest(descriptor.as_bytes()))
}

/// Nodes and streams. A stream is fingerprinted by category and schema; a
/// node by its logic version and, per port, the wired stream and schema.
pub fn fbp_manifest(version_key: &str, graph: &FlowGraph) -> ComponentManifest {
    let mut components = BTreeMap::new();
    for s in &graph.streams {
        let d = format!("stream|{}|{}", s.category, s.schema.signature());
        components.insert(s.id.clone(), fingerprint(&d));
    }
    for n in &graph.nodes {
        let mut ports: Vec<String> = Vec::new();
        for (dir, list) in [(Direction::In, &n.in_ports), (Direction::Out, &n.out_ports)] {
            for p in list {
                let wired = graph.wired_stream(&n.id, dir, &p.name).unwrap_or("");
                ports.push(format!("{dir:?}:{}={wired}:{}", p.name, p.schema.signature()));
            }
        }
        ports.sort();
        let d = format!("node|{}|{}", n.logic_version, ports.join(";"));
        components.insert(n.id.clone(), fingerprint(&d));
    }
    ComponentManifest {
        version_key: version_key.to_string(),
        components,
    }
}

/// Apis and data routines as `service.name`. An api is fingerprinted by its
/// request and response field sets and logic version; a routine by the
/// tables it touches and its logic version.
pub fn soa_manifest(version_key: &str, services: &[ServiceSpec]) -> ComponentManifest {
    let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
    let mut components = BTreeMap::new();
    for svc in services {
        for a in &svc.apis {
            let d = format!(
                "api|{}|req={}|resp={}",
                a.logic_version,
                join(&a.request_fields),
                join(&a.response_fields)
            );
            components.insert(format!("{}.{}", svc.id, a.name), fingerprint(&d));
        }
        for r in &svc.routines {
            let d = format!("routine|{}|tables={}", r.logic_version, join(&r.tables));
            components.insert(format!("{}.{}", svc.id, r.name), fingerprint(&d));
        }
    }
    ComponentManifest {
        version_key: version_key.to_string(),
        components,
    }
}

/// Manifest of a buildable version. Models do not affect fingerprints, so
/// untrained placeholders are used.
pub fn manifest(version: AppVersion) -> ComponentManifest {
    let cfg = BuildConfig::placeholder(0);
    match version.paradigm {
        Paradigm::Fbp => fbp_manifest(&version.key(), &build_fbp(version.app, version.stage, &cfg).graph),
        Paradigm::Soa => soa_manifest(&version.key(), &build_soa(version.app, version.stage, &cfg).services),
    }
}

pub fn diff(a: &ComponentManifest, b: &ComponentManifest) -> ComponentDiff {
    let mut added = BTreeSet::new();
    let mut removed = BTreeSet::new();
    let mut changed = BTreeSet::new();
    for (id, fp) in &b.components {
        match a.components.get(id) {
            None => {
                added.insert(id.clone());
            }
            Some(old) if old != fp => {
                changed.insert(id.clone());
            }
            Some(_) => {}
        }
    }
    for id in a.components.keys() {
        if !b.components.contains_key(id) {
            removed.insert(id.clone());
        }
    }
    let affected_count = added.len() + removed.len() + changed.len();
    ComponentDiff {
        added,
        removed,
        changed,
        affected_count,
    }
}
