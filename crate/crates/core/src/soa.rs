//! In-process service framework used as the baseline paradigm.
//!
//! Services own private stores reachable only through their own data
//! routines. Calls go through a [`Registry`], which records a trace of
//! `(caller, callee, api, tick)` and keeps no copy of request or response
//! documents.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

pub type Document = serde_json::Value;

pub type Handler = Rc<dyn Fn(&Document, &ServiceContext<'_>) -> Result<Document, SoaError>>;
pub type RoutineBody = Rc<dyn Fn(&mut Store, &Document) -> Result<Document, SoaError>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoaError {
    #[error("service {0} already registered")]
    DuplicateService(String),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("unknown api {service}.{api}")]
    UnknownApi { service: String, api: String },
    #[error("unknown data routine {service}.{routine}")]
    UnknownRoutine { service: String, routine: String },
    #[error("re-entrant call to {service}.{api}")]
    Reentrant { service: String, api: String },
    #[error("{service}.{api}: {source}")]
    Handler {
        service: String,
        api: String,
        #[source]
        source: Box<SoaError>,
    },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Failed(String),
}

impl SoaError {
    pub fn bad_request(msg: impl Into<String>) -> Self {
        SoaError::BadRequest(msg.into())
    }
}

/// Table name -> key -> document. Keys sort as text, so numeric keys
/// should be zero-padded with [`Store::key`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Store {
    tables: BTreeMap<String, BTreeMap<String, Document>>,
}

impl Store {
    pub fn key(n: u64) -> String {
        format!("{n:020}")
    }

    pub fn get(&self, table: &str, key: &str) -> Option<&Document> {
        self.tables.get(table)?.get(key)
    }

    pub fn put(&mut self, table: &str, key: &str, doc: Document) {
        self.tables
            .entry(table.to_string())
            .or_default()
            .insert(key.to_string(), doc);
    }

    /// All rows of a table in key order.
    pub fn scan(&self, table: &str) -> impl Iterator<Item = (&str, &Document)> {
        self.tables
            .get(table)
            .into_iter()
            .flat_map(|t| t.iter().map(|(k, v)| (k.as_str(), v)))
    }

    pub fn len(&self, table: &str) -> usize {
        self.tables.get(table).map_or(0, |t| t.len())
    }
}

#[derive(Clone)]
pub struct ApiSpec {
    pub name: String,
    pub request_fields: BTreeSet<String>,
    pub response_fields: BTreeSet<String>,
    pub logic_version: String,
    pub handler: Handler,
}

impl ApiSpec {
    pub fn new<F>(name: &str, version: &str, request: &[&str], response: &[&str], handler: F) -> Self
    where
        F: Fn(&Document, &ServiceContext<'_>) -> Result<Document, SoaError> + 'static,
    {
        ApiSpec {
            name: name.to_string(),
            request_fields: request.iter().map(|s| s.to_string()).collect(),
            response_fields: response.iter().map(|s| s.to_string()).collect(),
            logic_version: version.to_string(),
            handler: Rc::new(handler),
        }
    }
}

#[derive(Clone)]
pub struct RoutineSpec {
    pub name: String,
    pub logic_version: String,
    /// tables the routine touches
    pub tables: BTreeSet<String>,
    pub body: RoutineBody,
}

impl RoutineSpec {
    pub fn new<F>(name: &str, version: &str, tables: &[&str], body: F) -> Self
    where
        F: Fn(&mut Store, &Document) -> Result<Document, SoaError> + 'static,
    {
        RoutineSpec {
            name: name.to_string(),
            logic_version: version.to_string(),
            tables: tables.iter().map(|s| s.to_string()).collect(),
            body: Rc::new(body),
        }
    }
}

#[derive(Clone, Default)]
pub struct ServiceSpec {
    pub id: String,
    pub apis: Vec<ApiSpec>,
    pub routines: Vec<RoutineSpec>,
    pub store: Store,
}

impl ServiceSpec {
    pub fn new(id: &str) -> Self {
        ServiceSpec {
            id: id.to_string(),
            ..Default::default()
        }
    }

    pub fn api(mut self, api: ApiSpec) -> Self {
        self.apis.retain(|a| a.name != api.name);
        self.apis.push(api);
        self
    }

    pub fn routine(mut self, routine: RoutineSpec) -> Self {
        self.routines.retain(|r| r.name != routine.name);
        self.routines.push(routine);
        self
    }

    pub fn without_api(mut self, name: &str) -> Self {
        self.apis.retain(|a| a.name != name);
        self
    }

    pub fn without_routine(mut self, name: &str) -> Self {
        self.routines.retain(|r| r.name != name);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub caller: String,
    pub callee: String,
    pub api: String,
    pub tick: u64,
}

struct Service {
    spec: ServiceSpec,
    store: RefCell<Store>,
}

/// Handle given to an api handler. It reaches its own store only through
/// the service's data routines and other services only through the registry.
pub struct ServiceContext<'a> {
    registry: &'a Registry,
    service: &'a Service,
}

impl ServiceContext<'_> {
    pub fn tick(&self) -> u64 {
        self.registry.tick()
    }

    pub fn service_id(&self) -> &str {
        &self.service.spec.id
    }

    pub fn routine(&self, name: &str, args: &Document) -> Result<Document, SoaError> {
        let routine = self
            .service
            .spec
            .routines
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| SoaError::UnknownRoutine {
                service: self.service.spec.id.clone(),
                routine: name.to_string(),
            })?;
        let mut store = self.service.store.borrow_mut();
        (routine.body)(&mut store, args)
    }

    pub fn call(&self, callee: &str, api: &str, request: &Document) -> Result<Document, SoaError> {
        self.registry
            .call(&self.service.spec.id, callee, api, request)
    }
}

/// Owns the registered services. Confined to one thread.
#[derive(Default)]
pub struct Registry {
    services: BTreeMap<String, Service>,
    trace: RefCell<Vec<TraceEntry>>,
    in_flight: RefCell<Vec<(String, String)>>,
    tick: Cell<u64>,
}

/// Framework state exposed for inspection.
#[derive(Debug, Serialize)]
pub struct RegistrySnapshot {
    pub tick: u64,
    pub trace: Vec<TraceEntry>,
    pub stores: BTreeMap<String, Store>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ServiceSpec) -> Result<(), SoaError> {
        if self.services.contains_key(&spec.id) {
            return Err(SoaError::DuplicateService(spec.id));
        }
        let store = RefCell::new(spec.store.clone());
        self.services.insert(spec.id.clone(), Service { spec, store });
        Ok(())
    }

    pub fn services(&self) -> impl Iterator<Item = &ServiceSpec> {
        self.services.values().map(|s| &s.spec)
    }

    pub fn tick(&self) -> u64 {
        self.tick.get()
    }

    pub fn set_tick(&self, tick: u64) {
        self.tick.set(tick);
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.trace.borrow().clone()
    }

    /// Calls `callee.api` synchronously on behalf of `caller`.
    pub fn call(
        &self,
        caller: &str,
        callee: &str,
        api: &str,
        request: &Document,
    ) -> Result<Document, SoaError> {
        let service = self
            .services
            .get(callee)
            .ok_or_else(|| SoaError::UnknownService(callee.to_string()))?;
        let spec = service
            .spec
            .apis
            .iter()
            .find(|a| a.name == api)
            .ok_or_else(|| SoaError::UnknownApi {
                service: callee.to_string(),
                api: api.to_string(),
            })?;
        let target = (callee.to_string(), api.to_string());
        if self.in_flight.borrow().contains(&target) {
            return Err(SoaError::Reentrant {
                service: callee.to_string(),
                api: api.to_string(),
            });
        }
        self.trace.borrow_mut().push(TraceEntry {
            caller: caller.to_string(),
            callee: callee.to_string(),
            api: api.to_string(),
            tick: self.tick(),
        });
        self.in_flight.borrow_mut().push(target);
        let ctx = ServiceContext {
            registry: self,
            service,
        };
        let result = (spec.handler)(request, &ctx);
        self.in_flight.borrow_mut().pop();
        result.map_err(|e| SoaError::Handler {
            service: callee.to_string(),
            api: api.to_string(),
            source: Box::new(e),
        })
    }

    pub fn snapshot(&self) -> RegistrySnapshot {
        RegistrySnapshot {
            tick: self.tick(),
            trace: self.trace(),
            stores: self
                .services
                .iter()
                .map(|(id, s)| (id.clone(), s.store.borrow().clone()))
                .collect(),
        }
    }
}

/// Reads a required field from a request document.
pub fn field<'a>(doc: &'a Document, name: &str) -> Result<&'a Document, SoaError> {
    doc.get(name)
        .ok_or_else(|| SoaError::bad_request(format!("missing field {name}")))
}

pub fn field_i64(doc: &Document, name: &str) -> Result<i64, SoaError> {
    field(doc, name)?
        .as_i64()
        .ok_or_else(|| SoaError::bad_request(format!("{name} is not an integer")))
}

pub fn field_f64(doc: &Document, name: &str) -> Result<f64, SoaError> {
    field(doc, name)?
        .as_f64()
        .ok_or_else(|| SoaError::bad_request(format!("{name} is not a number")))
}

pub fn field_str<'a>(doc: &'a Document, name: &str) -> Result<&'a str, SoaError> {
    field(doc, name)?
        .as_str()
        .ok_or_else(|| SoaError::bad_request(format!("{name} is not text")))
}

pub fn field_bool(doc: &Document, name: &str) -> Result<bool, SoaError> {
    field(doc, name)?
        .as_bool()
        .ok_or_else(|| SoaError::bad_request(format!("{name} is not a boolean")))
}
