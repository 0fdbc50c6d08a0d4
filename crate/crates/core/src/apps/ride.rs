//! Ride allocation: match ride requests to the nearest free driver, track
//! pickups, and at later stages learn to estimate the pickup wait.

use std::collections::BTreeMap;

use serde_json::json;

use super::{float, int, schema, BuildConfig, FbpApp, Observation, SoaApp, Stage};
use crate::collection::{CollectionSpec, DatasetRow, Selection};
use crate::graph::{Emissions, FieldType::*, FlowGraph, NodeContext, Schema, StreamCategory::*, TransformError};
use crate::ml::{fit_linear, LinearModel, MlError};
use crate::soa::{field_f64, field_i64, ApiSpec, Document, RoutineSpec, ServiceSpec, SoaError, Store};

/// Feature order used by the wait estimator.
pub const FEATURES: [&str; 3] = ["distance", "available_drivers", "tick_of_day"];

pub const NO_DRIVER: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverState {
    pub driver_id: i64,
    pub x: f64,
    pub y: f64,
    pub available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RideRequest {
    pub ride_id: i64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub ride_id: i64,
    pub driver_id: Option<i64>,
    pub distance: f64,
    pub available_drivers: i64,
}

pub fn distance(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Nearest available driver; equal distances go to the lowest driver id.
pub fn allocate(req: &RideRequest, drivers: &[DriverState]) -> Allocation {
    let mut best: Option<(f64, i64)> = None;
    let mut available = 0;
    for d in drivers.iter().filter(|d| d.available) {
        available += 1;
        let dist = distance(req.x, req.y, d.x, d.y);
        let better = match best {
            None => true,
            Some((bd, bid)) => dist < bd || (dist == bd && d.driver_id < bid),
        };
        if better {
            best = Some((dist, d.driver_id));
        }
    }
    Allocation {
        ride_id: req.ride_id,
        driver_id: best.map(|(_, id)| id),
        distance: best.map_or(0.0, |(d, _)| d),
        available_drivers: available,
    }
}

pub fn wait_time(pickup_time: f64, request_tick: u64) -> f64 {
    pickup_time - request_tick as f64
}

/// `(rides_served, mean_wait)` after the given waits, summed in order.
pub fn service_level(waits: &[f64]) -> (i64, f64) {
    let n = waits.len();
    let sum: f64 = waits.iter().sum();
    (n as i64, if n == 0 { 0.0 } else { sum / n as f64 })
}

pub fn features(distance: f64, available_drivers: i64, tick_of_day: i64) -> Vec<f64> {
    vec![distance, available_drivers as f64, tick_of_day as f64]
}

pub fn collection_spec() -> CollectionSpec {
    CollectionSpec {
        dataset_name: "ride_wait_times".into(),
        label: Selection::new("wait_times", &["wait_time"], "ride_id"),
        features: vec![
            Selection::new("allocations", &["distance", "available_drivers"], "ride_id"),
            Selection::new("ride_requests", &["tick_of_day"], "ride_id"),
        ],
    }
}

/// Fits the wait estimator on collected rows.
pub fn train(rows: &[DatasetRow]) -> Result<LinearModel, MlError> {
    let data: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let x: Option<Vec<f64>> = FEATURES
                .iter()
                .map(|f| r.features.get(*f).and_then(|v| v.as_float()))
                .collect();
            let y = r.label.get("wait_time").and_then(|v| v.as_float());
            match (x, y) {
                (Some(x), Some(y)) => Ok((x, y)),
                _ => Err(MlError::NonFinite { row: i }),
            }
        })
        .collect::<Result<_, _>>()?;
    fit_linear(&data)
}

fn s_drivers() -> Schema {
    schema("driver", &[("driver_id", Int), ("x", Float), ("y", Float)])
}
fn s_requests() -> Schema {
    schema("ride_request", &[("ride_id", Int), ("x", Float), ("y", Float), ("tick_of_day", Int)])
}
fn s_pickups() -> Schema {
    schema("pickup", &[("ride_id", Int), ("driver_id", Int), ("pickup_time", Float)])
}
fn s_dropoffs() -> Schema {
    schema("dropoff", &[("ride_id", Int), ("driver_id", Int)])
}
fn s_allocations() -> Schema {
    schema(
        "allocation",
        &[
            ("ride_id", Int),
            ("driver_id", Int),
            ("distance", Float),
            ("available_drivers", Int),
            ("request_tick", Int),
        ],
    )
}
fn s_assignments() -> Schema {
    schema("assignment", &[("ride_id", Int), ("driver_id", Int)])
}
fn s_waits() -> Schema {
    schema("wait_time", &[("ride_id", Int), ("wait_time", Float)])
}
fn s_service() -> Schema {
    schema("service_level", &[("rides_served", Int), ("mean_wait", Float)])
}
fn s_estimates() -> Schema {
    schema("estimated_wait", &[("ride_id", Int), ("estimated_wait", Float)])
}

/// Replays the whole history and re-derives every allocation. Within a
/// tick, registrations come first, then dropoffs, then requests.
fn allocator(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let drivers = ctx.port("drivers")?;
    let dropoffs = ctx.port("dropoffs")?;
    let requests = ctx.port("requests")?;

    let mut events: Vec<(u64, u8, u64, crate::graph::Row<'_>)> = Vec::new();
    for r in drivers.rows() {
        events.push((r.tick(), 0, r.seq(), r));
    }
    for r in dropoffs.rows() {
        events.push((r.tick(), 1, r.seq(), r));
    }
    for r in requests.rows() {
        events.push((r.tick(), 2, r.seq(), r));
    }
    events.sort_by_key(|(t, p, s, _)| (*t, *p, *s));

    let mut pool: BTreeMap<i64, DriverState> = BTreeMap::new();
    let mut out = Emissions::new();
    let fresh = requests.delta_start as u64;
    for (tick, prio, seq, row) in events {
        match prio {
            0 => {
                let id = row.int("driver_id")?;
                pool.insert(
                    id,
                    DriverState {
                        driver_id: id,
                        x: row.float("x")?,
                        y: row.float("y")?,
                        available: true,
                    },
                );
            }
            1 => {
                if let Some(d) = pool.get_mut(&row.int("driver_id")?) {
                    d.available = true;
                }
            }
            _ => {
                let req = RideRequest {
                    ride_id: row.int("ride_id")?,
                    x: row.float("x")?,
                    y: row.float("y")?,
                };
                let states: Vec<DriverState> = pool.values().copied().collect();
                let a = allocate(&req, &states);
                if let Some(id) = a.driver_id {
                    pool.get_mut(&id).expect("allocated from pool").available = false;
                }
                if seq >= fresh {
                    out.emit(
                        "allocations",
                        vec![
                            int(a.ride_id),
                            int(a.driver_id.unwrap_or(NO_DRIVER)),
                            float(a.distance),
                            int(a.available_drivers),
                            int(tick as i64),
                        ],
                    );
                }
            }
        }
    }
    Ok(out)
}

fn dispatcher(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let mut out = Emissions::new();
    for r in ctx.port("allocations")?.delta_rows() {
        out.emit("assignments", vec![int(r.int("ride_id")?), int(r.int("driver_id")?)]);
    }
    Ok(out)
}

fn pickup_tracker(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let allocations = ctx.port("allocations")?;
    let mut request_tick = BTreeMap::new();
    for r in allocations.rows() {
        request_tick.insert(r.int("ride_id")?, r.int("request_tick")?);
    }
    let mut out = Emissions::new();
    for p in ctx.port("pickups")?.delta_rows() {
        let ride = p.int("ride_id")?;
        let t = request_tick
            .get(&ride)
            .ok_or_else(|| TransformError(format!("pickup for unallocated ride {ride}")))?;
        out.emit("wait_times", vec![int(ride), float(wait_time(p.float("pickup_time")?, *t as u64))]);
    }
    Ok(out)
}

fn service_monitor(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let waits = ctx.port("wait_times")?;
    let all: Vec<f64> = waits
        .rows()
        .map(|r| r.float("wait_time"))
        .collect::<Result<_, _>>()?;
    let mut out = Emissions::new();
    for i in waits.delta_start..all.len() {
        let (served, mean) = service_level(&all[..=i]);
        out.emit("service_level", vec![int(served), float(mean)]);
    }
    Ok(out)
}

pub fn fbp(stage: Stage, cfg: &BuildConfig) -> FbpApp {
    let mut g = FlowGraph::new();
    g.add_stream("drivers", Input, s_drivers())
        .add_stream("ride_requests", Input, s_requests())
        .add_stream("pickups", Input, s_pickups())
        .add_stream("dropoffs", Input, s_dropoffs())
        .add_stream("allocations", Internal, s_allocations())
        .add_stream("assignments", Output, s_assignments())
        .add_stream("wait_times", Internal, s_waits())
        .add_stream("service_level", Output, s_service());
    g.wire_node(
        "allocator",
        "v1",
        &[("drivers", "drivers"), ("dropoffs", "dropoffs"), ("requests", "ride_requests")],
        &[("allocations", "allocations")],
        allocator,
    );
    g.wire_node("dispatcher", "v1", &[("allocations", "allocations")], &[("assignments", "assignments")], dispatcher);
    g.wire_node(
        "pickup_tracker",
        "v1",
        &[("allocations", "allocations"), ("pickups", "pickups")],
        &[("wait_times", "wait_times")],
        pickup_tracker,
    );
    g.wire_node("service_monitor", "v1", &[("wait_times", "wait_times")], &[("service_level", "service_level")], service_monitor);
    let mut observed = vec!["assignments", "service_level"];

    if stage >= Stage::Data {
        // Marks wait_times as a dataset label; rows are joined from the logs.
        g.wire_node("dataset_collector", "v1", &[("labels", "wait_times")], &[], |_| Ok(Emissions::new()));
    }
    if stage >= Stage::Ml {
        let model = cfg.ride_model.clone();
        g.add_stream("estimated_waits", Output, s_estimates());
        g.wire_node(
            "wait_estimator",
            "v1",
            &[("allocations", "allocations"), ("requests", "ride_requests")],
            &[("estimates", "estimated_waits")],
            move |ctx| {
                let mut tod = BTreeMap::new();
                for r in ctx.port("requests")?.rows() {
                    tod.insert(r.int("ride_id")?, r.int("tick_of_day")?);
                }
                let mut out = Emissions::new();
                for a in ctx.port("allocations")?.delta_rows() {
                    if a.int("driver_id")? == NO_DRIVER {
                        continue;
                    }
                    let ride = a.int("ride_id")?;
                    let tick_of_day = *tod
                        .get(&ride)
                        .ok_or_else(|| TransformError(format!("allocation for unknown ride {ride}")))?;
                    let x = features(a.float("distance")?, a.int("available_drivers")?, tick_of_day);
                    out.emit("estimates", vec![int(ride), float(model.predict(&x))]);
                }
                Ok(out)
            },
        );
        observed.push("estimated_waits");
    }
    FbpApp { graph: g, observed }
}

fn drivers_service() -> ServiceSpec {
    ServiceSpec::new("drivers")
        .api(ApiSpec::new("register_driver", "v1", &["driver_id", "x", "y"], &[], |req, ctx| {
            ctx.routine("save_driver", req)?;
            Ok(json!({}))
        }))
        .api(ApiSpec::new("release_driver", "v1", &["driver_id"], &[], |req, ctx| {
            let id = field_i64(req, "driver_id")?;
            ctx.routine("set_availability", &json!({"driver_id": id, "available": true}))?;
            Ok(json!({}))
        }))
        .api(ApiSpec::new("reserve_driver", "v1", &["driver_id"], &[], |req, ctx| {
            let id = field_i64(req, "driver_id")?;
            ctx.routine("set_availability", &json!({"driver_id": id, "available": false}))?;
            Ok(json!({}))
        }))
        .api(ApiSpec::new("available_drivers", "v1", &[], &["drivers"], |_, ctx| {
            ctx.routine("load_drivers", &json!({}))
        }))
        .routine(RoutineSpec::new("save_driver", "v1", &["drivers"], |store, req| {
            let id = field_i64(req, "driver_id")?;
            let doc = json!({
                "driver_id": id,
                "x": field_f64(req, "x")?,
                "y": field_f64(req, "y")?,
                "available": true,
            });
            store.put("drivers", &Store::key(id as u64), doc);
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new("set_availability", "v1", &["drivers"], |store, req| {
            let id = field_i64(req, "driver_id")?;
            let key = Store::key(id as u64);
            if let Some(mut doc) = store.get("drivers", &key).cloned() {
                doc["available"] = req["available"].clone();
                store.put("drivers", &key, doc);
            }
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new("load_drivers", "v1", &["drivers"], |store, _| {
            let all: Vec<Document> = store.scan("drivers").map(|(_, d)| d.clone()).collect();
            Ok(json!({ "drivers": all }))
        }))
}

fn allocator_service() -> ServiceSpec {
    ServiceSpec::new("allocator").api(ApiSpec::new(
        "allocate",
        "v1",
        &["ride_id", "x", "y"],
        &["driver_id", "distance", "available_drivers"],
        |req, ctx| {
            let listing = ctx.call("drivers", "available_drivers", &json!({}))?;
            let drivers: Vec<DriverState> = listing["drivers"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|d| {
                    Ok(DriverState {
                        driver_id: field_i64(d, "driver_id")?,
                        x: field_f64(d, "x")?,
                        y: field_f64(d, "y")?,
                        available: d["available"].as_bool().unwrap_or(false),
                    })
                })
                .collect::<Result<_, SoaError>>()?;
            let req = RideRequest {
                ride_id: field_i64(req, "ride_id")?,
                x: field_f64(req, "x")?,
                y: field_f64(req, "y")?,
            };
            let a = allocate(&req, &drivers);
            if let Some(id) = a.driver_id {
                ctx.call("drivers", "reserve_driver", &json!({ "driver_id": id }))?;
            }
            Ok(json!({
                "driver_id": a.driver_id.unwrap_or(NO_DRIVER),
                "distance": a.distance,
                "available_drivers": a.available_drivers,
            }))
        },
    ))
}

fn rides_service(stage: Stage) -> ServiceSpec {
    let request_version = match stage {
        Stage::Min => "v1",
        Stage::Data => "v2",
        Stage::Ml => "v3",
    };
    let keep_features = stage >= Stage::Data;
    let estimate = stage >= Stage::Ml;
    let mut svc = ServiceSpec::new("rides")
        .api(ApiSpec::new(
            "request_ride",
            request_version,
            &["ride_id", "x", "y", "tick_of_day"],
            if estimate { &["ride_id", "driver_id", "estimated_wait"] } else { &["ride_id", "driver_id"] },
            move |req, ctx| {
                let ride_id = field_i64(req, "ride_id")?;
                let tod = field_i64(req, "tick_of_day")?;
                let a = ctx.call("allocator", "allocate", req)?;
                let driver_id = field_i64(&a, "driver_id")?;
                let mut saved = json!({
                    "ride_id": ride_id,
                    "driver_id": driver_id,
                    "request_tick": ctx.tick(),
                });
                if keep_features {
                    saved["distance"] = a["distance"].clone();
                    saved["available_drivers"] = a["available_drivers"].clone();
                    saved["tick_of_day"] = json!(tod);
                }
                ctx.routine("save_ride", &saved)?;
                let mut resp = json!({ "ride_id": ride_id, "driver_id": driver_id });
                if estimate && driver_id != NO_DRIVER {
                    let est = ctx.call(
                        "estimator",
                        "estimate_wait",
                        &json!({
                            "distance": a["distance"],
                            "available_drivers": a["available_drivers"],
                            "tick_of_day": tod,
                        }),
                    )?;
                    resp["estimated_wait"] = est["estimated_wait"].clone();
                }
                Ok(resp)
            },
        ))
        .api(ApiSpec::new(
            "record_pickup",
            "v1",
            &["ride_id", "driver_id", "pickup_time"],
            &["rides_served", "mean_wait"],
            |req, ctx| {
                let ride_id = field_i64(req, "ride_id")?;
                let ride = ctx.routine("load_ride", &json!({ "ride_id": ride_id }))?;
                if ride.is_null() {
                    return Err(SoaError::Failed(format!("pickup for unallocated ride {ride_id}")));
                }
                let w = wait_time(field_f64(req, "pickup_time")?, field_i64(&ride, "request_tick")? as u64);
                ctx.routine("save_wait", &json!({ "ride_id": ride_id, "wait_time": w }))?;
                let waits = ctx.routine("load_waits", &json!({}))?;
                let all: Vec<f64> = waits["waits"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|w| field_f64(w, "wait_time"))
                    .collect::<Result<_, _>>()?;
                let (served, mean) = service_level(&all);
                Ok(json!({ "rides_served": served, "mean_wait": mean }))
            },
        ))
        .api(ApiSpec::new("record_dropoff", "v1", &["ride_id", "driver_id"], &[], |req, ctx| {
            ctx.call("drivers", "release_driver", &json!({ "driver_id": field_i64(req, "driver_id")? }))?;
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new(
            "save_ride",
            if keep_features { "v2" } else { "v1" },
            &["rides"],
            |store, ride| {
                let id = field_i64(ride, "ride_id")?;
                store.put("rides", &Store::key(id as u64), ride.clone());
                Ok(json!({}))
            },
        ))
        .routine(RoutineSpec::new("load_ride", "v1", &["rides"], |store, req| {
            let id = field_i64(req, "ride_id")?;
            Ok(store.get("rides", &Store::key(id as u64)).cloned().unwrap_or(Document::Null))
        }))
        .routine(RoutineSpec::new("save_wait", "v1", &["waits"], |store, w| {
            let n = store.len("waits") as u64;
            store.put("waits", &Store::key(n), w.clone());
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new("load_waits", "v1", &["waits"], |store, _| {
            let all: Vec<Document> = store.scan("waits").map(|(_, d)| d.clone()).collect();
            Ok(json!({ "waits": all }))
        }));
    if keep_features {
        svc = svc
            .api(ApiSpec::new("export_dataset", "v1", &[], &["rows"], |_, ctx| {
                ctx.routine("load_training_rows", &json!({}))
            }))
            .routine(RoutineSpec::new("load_training_rows", "v1", &["rides", "waits"], |store, _| {
                let mut rows = Vec::new();
                for (_, w) in store.scan("waits") {
                    let id = field_i64(w, "ride_id")?;
                    let Some(r) = store.get("rides", &Store::key(id as u64)) else { continue };
                    rows.push(json!({
                        "key": id,
                        "features": {
                            "distance": r["distance"],
                            "available_drivers": r["available_drivers"],
                            "tick_of_day": r["tick_of_day"],
                        },
                        "label": { "wait_time": w["wait_time"] },
                    }));
                }
                Ok(json!({ "rows": rows }))
            }));
    }
    svc
}

fn estimator_service(model: &LinearModel) -> ServiceSpec {
    let mut svc = ServiceSpec::new("estimator")
        .api(ApiSpec::new("estimate_wait", "v1", &FEATURES, &["estimated_wait"], |req, ctx| {
            let m = ctx.routine("load_model", &json!({}))?;
            let model: LinearModel =
                serde_json::from_value(m).map_err(|e| SoaError::Failed(e.to_string()))?;
            let x = features(
                field_f64(req, "distance")?,
                field_i64(req, "available_drivers")?,
                field_i64(req, "tick_of_day")?,
            );
            Ok(json!({ "estimated_wait": model.predict(&x) }))
        }))
        .routine(RoutineSpec::new("load_model", "v1", &["model"], |store, _| {
            store
                .get("model", "wait")
                .cloned()
                .ok_or_else(|| SoaError::Failed("no model loaded".into()))
        }));
    svc.store.put("model", "wait", serde_json::to_value(model).expect("model serializes"));
    svc
}

fn observe(api: &str, resp: &Document) -> Vec<Observation> {
    let mut out = Vec::new();
    match api {
        "request_ride" => {
            out.push(Observation::new(
                "assignments",
                json!({ "ride_id": resp["ride_id"], "driver_id": resp["driver_id"] }),
            ));
            if resp.get("estimated_wait").is_some() {
                out.push(Observation::new(
                    "estimated_waits",
                    json!({ "ride_id": resp["ride_id"], "estimated_wait": resp["estimated_wait"] }),
                ));
            }
        }
        "record_pickup" => out.push(Observation::new("service_level", resp.clone())),
        _ => {}
    }
    out
}

pub fn soa(stage: Stage, cfg: &BuildConfig) -> SoaApp {
    let mut services = vec![drivers_service(), allocator_service(), rides_service(stage)];
    if stage >= Stage::Ml {
        services.push(estimator_service(&cfg.ride_model));
    }
    SoaApp {
        services,
        routes: vec![
            ("drivers", "drivers", "register_driver"),
            ("ride_requests", "rides", "request_ride"),
            ("pickups", "rides", "record_pickup"),
            ("dropoffs", "rides", "record_dropoff"),
        ],
        tick_hooks: vec![],
        observe,
    }
}

/// Reads `export_dataset` rows back into collection rows.
pub fn rows_from_export(doc: &Document) -> Vec<DatasetRow> {
    serde_json::from_value(doc["rows"].clone()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::SplitMix64;

    fn d(id: i64, x: f64, y: f64) -> DriverState {
        DriverState { driver_id: id, x, y, available: true }
    }

    fn req() -> RideRequest {
        RideRequest { ride_id: 1, x: 0.0, y: 0.0 }
    }

    #[test]
    fn single_driver() {
        let a = allocate(&req(), &[d(7, 1.0, 1.0)]);
        assert_eq!(a.driver_id, Some(7));
        assert_eq!(a.available_drivers, 1);
    }

    #[test]
    fn equal_distance_goes_to_lowest_id() {
        let a = allocate(&req(), &[d(2, 3.0, 0.0), d(1, 0.0, 3.0)]);
        assert_eq!(a.driver_id, Some(1));
        assert_eq!(a.distance, 3.0);
    }

    #[test]
    fn no_available_driver() {
        let mut busy = d(1, 0.0, 0.0);
        busy.available = false;
        let a = allocate(&req(), &[busy]);
        assert_eq!(a.driver_id, None);
        assert_eq!(a.available_drivers, 0);
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = SplitMix64::new(42);
        for _ in 0..200 {
            let drivers: Vec<DriverState> = (0..5)
                .map(|i| DriverState {
                    driver_id: i,
                    x: rng.uniform(0.0, 10.0),
                    y: rng.uniform(0.0, 10.0),
                    available: rng.below(4) != 0,
                })
                .collect();
            let r = RideRequest { ride_id: 0, x: rng.uniform(0.0, 10.0), y: rng.uniform(0.0, 10.0) };
            let mut expected: Option<(f64, i64)> = None;
            for dr in &drivers {
                if !dr.available {
                    continue;
                }
                let dist = ((r.x - dr.x).powi(2) + (r.y - dr.y).powi(2)).sqrt();
                if expected.is_none_or(|(bd, _)| dist < bd) {
                    expected = Some((dist, dr.driver_id));
                }
            }
            assert_eq!(allocate(&r, &drivers).driver_id, expected.map(|e| e.1));
        }
    }

    #[test]
    fn graphs_validate_at_every_stage() {
        let cfg = BuildConfig::placeholder(0);
        for stage in [Stage::Min, Stage::Data, Stage::Ml] {
            let app = fbp(stage, &cfg);
            assert!(crate::graph::validate(&app.graph).is_empty(), "{stage}");
        }
    }

    #[test]
    fn service_level_running_mean() {
        assert_eq!(service_level(&[]), (0, 0.0));
        assert_eq!(service_level(&[2.0, 4.0]), (2, 3.0));
    }
}
