//! Deterministic discrete-event simulation of each app's outside world.
//!
//! Per tick: due reactive events, then fresh exogenous events, are delivered
//! to the app (injected into input streams or sent as api calls); the app
//! runs; its observable outputs are fed back to the world, which may schedule
//! reactive events for later ticks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::apps::{
    build_fbp, build_soa, claims, ride, AppName, AppVersion, BuildConfig, FbpApp, Observation, Paradigm, SoaApp, Stage,
};
use crate::collection::{collect, CollectionError, DatasetRow};
use crate::json::canonical;
use crate::ml::{MlError, SplitMix64};
use crate::runtime::{RuntimeError, RuntimeInstance};
use crate::soa::{Document, Registry, SoaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub kind: String,
    pub payload: Document,
}

impl Event {
    pub fn new(tick: u64, kind: &str, payload: Document) -> Self {
        Event {
            tick,
            kind: kind.to_string(),
            payload,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("tick {tick}: {source}")]
    Runtime {
        tick: u64,
        #[source]
        source: RuntimeError,
    },
    #[error("tick {tick}: {source}")]
    Service {
        tick: u64,
        #[source]
        source: SoaError,
    },
    #[error("tick {tick}: event {kind} rejected: {reason}")]
    BadEvent { tick: u64, kind: String, reason: String },
    #[error("collection failed: {0}")]
    Collection(#[from] CollectionError),
    #[error("training failed: {0}")]
    Training(#[from] MlError),
    #[error("{0}")]
    Unsupported(String),
}

/// Workload knobs. Defaults differ per app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// mean exogenous arrivals per tick (rides, claims, posts, requests)
    pub arrival_rate: f64,
    /// drivers, users or initial movies
    pub population: usize,
    /// half-width of uniform noise added to ride wait times
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub app: AppName,
    pub seed: u64,
    pub ticks: u64,
    pub params: ScenarioParams,
}

impl Scenario {
    pub fn new(app: AppName, seed: u64, ticks: u64) -> Self {
        let params = match app {
            AppName::RideAllocation => ScenarioParams {
                arrival_rate: 1.0,
                population: 20,
                noise: 1.0,
            },
            AppName::Mblogger => ScenarioParams {
                arrival_rate: 1.0,
                population: 10,
                noise: 0.0,
            },
            AppName::InsuranceClaims => ScenarioParams {
                arrival_rate: 2.0,
                population: 0,
                noise: 0.0,
            },
            AppName::PlaylistBuilder => ScenarioParams {
                arrival_rate: 1.0,
                population: 20,
                noise: 0.0,
            },
        };
        Scenario {
            app,
            seed,
            ticks,
            params,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.params.noise = noise;
        self
    }

    pub fn with_arrival_rate(mut self, rate: f64) -> Self {
        self.params.arrival_rate = rate;
        self
    }
}

/// The simulated outside world of one app.
trait World {
    fn exogenous(&mut self, tick: u64, rng: &mut SplitMix64) -> Vec<Event>;
    /// Follow-up events caused by outputs seen at `tick`; all land later.
    fn react(&mut self, tick: u64, observed: &[Observation], rng: &mut SplitMix64) -> Vec<Event>;
}

/// Event source for a scenario: a world plus its pending reactive events.
pub struct Simulation {
    world: Box<dyn World>,
    rng: SplitMix64,
    /// (tick, insertion) -> event
    pending: BTreeMap<(u64, u64), Event>,
    inserted: u64,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Self {
        let p = &scenario.params;
        let world: Box<dyn World> = match scenario.app {
            AppName::RideAllocation => Box::new(RideWorld::new(p)),
            AppName::Mblogger => Box::new(BlogWorld::new(p)),
            AppName::InsuranceClaims => Box::new(ClaimsWorld::new(p)),
            AppName::PlaylistBuilder => Box::new(PlaylistWorld::new(p)),
        };
        Simulation {
            world,
            rng: SplitMix64::new(scenario.seed),
            pending: BTreeMap::new(),
            inserted: 0,
        }
    }

    /// Events to deliver at `tick`: due reactive events first, then new
    /// exogenous ones.
    pub fn generate_events(&mut self, tick: u64) -> Vec<Event> {
        let later = self.pending.split_off(&(tick + 1, 0));
        let due = std::mem::replace(&mut self.pending, later);
        let mut events: Vec<Event> = due.into_values().collect();
        events.extend(self.world.exogenous(tick, &mut self.rng));
        events
    }

    /// Feeds outputs seen at `tick` back to the world.
    pub fn observe(&mut self, tick: u64, observed: &[Observation]) {
        for e in self.world.react(tick, observed, &mut self.rng) {
            debug_assert!(e.tick > tick);
            self.pending.insert((e.tick, self.inserted), e);
            self.inserted += 1;
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }
}

fn poisson_count(rng: &mut SplitMix64, rate: f64) -> u64 {
    if rate <= 0.0 {
        0
    } else {
        rng.poisson(rate)
    }
}

struct RideWorld {
    rate: f64,
    noise: f64,
    drivers: Vec<(f64, f64)>,
    rides: BTreeMap<i64, (f64, f64)>,
    next_ride: i64,
}

impl RideWorld {
    fn new(p: &ScenarioParams) -> Self {
        RideWorld {
            rate: p.arrival_rate,
            noise: p.noise,
            drivers: Vec::with_capacity(p.population),
            rides: BTreeMap::new(),
            next_ride: 0,
        }
    }
}

pub const RIDE_AREA: f64 = 10.0;
pub const RIDE_DRIVERS: usize = 20;

/// Noise-free pickup wait for a driver `distance` away.
pub fn base_wait(distance: f64) -> f64 {
    2.0 * distance + 1.0
}

impl World for RideWorld {
    fn exogenous(&mut self, tick: u64, rng: &mut SplitMix64) -> Vec<Event> {
        let mut out = Vec::new();
        if tick == 0 {
            let population = self.drivers.capacity();
            for id in 0..population {
                let (x, y) = (rng.uniform(0.0, RIDE_AREA), rng.uniform(0.0, RIDE_AREA));
                self.drivers.push((x, y));
                out.push(Event::new(tick, "drivers", json!({"driver_id": id, "x": x, "y": y})));
            }
        }
        for _ in 0..poisson_count(rng, self.rate) {
            let (x, y) = (rng.uniform(0.0, RIDE_AREA), rng.uniform(0.0, RIDE_AREA));
            let id = self.next_ride;
            self.next_ride += 1;
            self.rides.insert(id, (x, y));
            out.push(Event::new(
                tick,
                "ride_requests",
                json!({"ride_id": id, "x": x, "y": y, "tick_of_day": (tick % 24) as i64}),
            ));
        }
        out
    }

    fn react(&mut self, tick: u64, observed: &[Observation], rng: &mut SplitMix64) -> Vec<Event> {
        let mut out = Vec::new();
        for o in observed.iter().filter(|o| o.kind == "assignments") {
            let (Some(ride_id), Some(driver_id)) = (o.payload["ride_id"].as_i64(), o.payload["driver_id"].as_i64()) else {
                continue;
            };
            if driver_id == ride::NO_DRIVER {
                continue;
            }
            let (Some(&(rx, ry)), Some(&(dx, dy))) = (self.rides.get(&ride_id), self.drivers.get(driver_id as usize)) else {
                continue;
            };
            let noise = if self.noise > 0.0 {
                rng.uniform(-self.noise, self.noise)
            } else {
                0.0
            };
            let w = base_wait(ride::distance(rx, ry, dx, dy)) + noise;
            let pickup_tick = tick + (w.round().max(1.0) as u64);
            let trip = 1 + rng.below(5);
            out.push(Event::new(
                pickup_tick,
                "pickups",
                json!({"ride_id": ride_id, "driver_id": driver_id, "pickup_time": tick as f64 + w}),
            ));
            out.push(Event::new(
                pickup_tick + trip,
                "dropoffs",
                json!({"ride_id": ride_id, "driver_id": driver_id}),
            ));
        }
        out
    }
}

pub const BLOG_VOCABULARY: [&str; 12] = [
    "coffee", "rust", "rain", "music", "garden", "train", "code", "cat", "river", "book", "night", "bread",
];

struct BlogWorld {
    rate: f64,
    users: u64,
    follows: std::collections::BTreeSet<(u64, u64)>,
    next_post: i64,
    next_request: i64,
}

impl BlogWorld {
    fn new(p: &ScenarioParams) -> Self {
        BlogWorld {
            rate: p.arrival_rate,
            users: p.population.max(2) as u64,
            follows: Default::default(),
            next_post: 0,
            next_request: 0,
        }
    }

    fn try_follow(&mut self, tick: u64, rng: &mut SplitMix64, out: &mut Vec<Event>) {
        let a = rng.below(self.users);
        let b = rng.below(self.users);
        if a != b && self.follows.insert((a, b)) {
            out.push(Event::new(tick, "follows", json!({"follower": a, "followee": b})));
        }
    }
}

impl World for BlogWorld {
    fn exogenous(&mut self, tick: u64, rng: &mut SplitMix64) -> Vec<Event> {
        let mut out = Vec::new();
        let initial = if tick == 0 { 2 * self.users } else { 0 };
        for _ in 0..initial + poisson_count(rng, self.rate / 2.0) {
            self.try_follow(tick, rng, &mut out);
        }
        for _ in 0..poisson_count(rng, self.rate) {
            let author = rng.below(self.users);
            let len = 3 + rng.below(4);
            let words: Vec<&str> = (0..len)
                .map(|_| BLOG_VOCABULARY[rng.below(BLOG_VOCABULARY.len() as u64) as usize])
                .collect();
            let id = self.next_post;
            self.next_post += 1;
            out.push(Event::new(
                tick,
                "posts",
                json!({"post_id": id, "author": author, "text": words.join(" ")}),
            ));
        }
        for _ in 0..poisson_count(rng, self.rate) {
            let id = self.next_request;
            self.next_request += 1;
            out.push(Event::new(
                tick,
                "timeline_requests",
                json!({"request_id": id, "user_id": rng.below(self.users)}),
            ));
        }
        out
    }

    fn react(&mut self, _: u64, _: &[Observation], _: &mut SplitMix64) -> Vec<Event> {
        Vec::new()
    }
}

struct ClaimsWorld {
    rate: f64,
    next_claim: i64,
}

impl ClaimsWorld {
    fn new(p: &ScenarioParams) -> Self {
        ClaimsWorld {
            rate: p.arrival_rate,
            next_claim: 0,
        }
    }
}

/// One random claim. Amounts are whole currency units drawn from three
/// bands so every rule boundary is well populated.
/// Mostly auto claims with low priors, so the greedy tree meets the
/// small-amount threshold before the large-amount one.
pub fn random_claim(claim_id: i64, rng: &mut SplitMix64) -> claims::Claim {
    let kind = match rng.below(10) {
        0..=7 => claims::ClaimKind::Auto,
        8 => claims::ClaimKind::Health,
        _ => claims::ClaimKind::Home,
    };
    let pick = |rng: &mut SplitMix64, band: &[f64]| band[rng.below(band.len() as u64) as usize];
    let amount = match rng.below(10) {
        0..=4 => pick(rng, &claims::LOW_AMOUNTS),
        5..=8 => pick(rng, &claims::MID_AMOUNTS),
        _ => pick(rng, &claims::HIGH_AMOUNTS),
    };
    let prior_claims = if rng.below(10) < 9 { rng.below(3) } else { 3 + rng.below(3) } as i64;
    claims::Claim {
        claim_id,
        kind: kind.as_str().to_string(),
        amount,
        prior_claims,
        flagged: rng.below(5) == 0,
    }
}

impl World for ClaimsWorld {
    fn exogenous(&mut self, tick: u64, rng: &mut SplitMix64) -> Vec<Event> {
        (0..poisson_count(rng, self.rate))
            .map(|_| {
                let c = random_claim(self.next_claim, rng);
                self.next_claim += 1;
                Event::new(
                    tick,
                    "claims",
                    json!({
                        "claim_id": c.claim_id,
                        "kind": c.kind,
                        "amount": c.amount,
                        "prior_claims": c.prior_claims,
                        "flagged": c.flagged,
                    }),
                )
            })
            .collect()
    }

    fn react(&mut self, _: u64, _: &[Observation], _: &mut SplitMix64) -> Vec<Event> {
        Vec::new()
    }
}

pub const GENRES: [&str; 4] = ["action", "comedy", "drama", "horror"];

struct PlaylistWorld {
    rate: f64,
    initial: usize,
    next_movie: u64,
    next_request: i64,
}

impl PlaylistWorld {
    fn new(p: &ScenarioParams) -> Self {
        PlaylistWorld {
            rate: p.arrival_rate,
            initial: p.population,
            next_movie: 0,
            next_request: 0,
        }
    }
}

impl World for PlaylistWorld {
    fn exogenous(&mut self, tick: u64, rng: &mut SplitMix64) -> Vec<Event> {
        let mut out = Vec::new();
        let initial = if tick == 0 { self.initial as u64 } else { 0 };
        for _ in 0..initial + poisson_count(rng, self.rate / 2.0) {
            let title = format!("movie-{:04}", self.next_movie);
            self.next_movie += 1;
            let genre = GENRES[rng.below(GENRES.len() as u64) as usize];
            let gross = (1 + rng.below(500)) as f64;
            out.push(Event::new(tick, "movies", json!({"title": title, "genre": genre, "gross": gross})));
        }
        for _ in 0..poisson_count(rng, self.rate) {
            let id = self.next_request;
            self.next_request += 1;
            let genre = GENRES[rng.below(GENRES.len() as u64) as usize];
            out.push(Event::new(
                tick,
                "playlist_requests",
                json!({"request_id": id, "genre": genre, "k": 1 + rng.below(5)}),
            ));
        }
        out
    }

    fn react(&mut self, _: u64, _: &[Observation], _: &mut SplitMix64) -> Vec<Event> {
        Vec::new()
    }
}

/// A running app in either paradigm.
pub enum AppInstance {
    Fbp {
        runtime: Box<RuntimeInstance>,
        observed: Vec<&'static str>,
        /// records already reported per observed stream
        seen: BTreeMap<&'static str, usize>,
    },
    Soa {
        registry: Registry,
        app: SoaApp,
        buffer: Vec<Observation>,
    },
}

impl AppInstance {
    pub fn start_fbp(app: FbpApp) -> Result<Self, RuntimeError> {
        let runtime = RuntimeInstance::start(app.graph)?;
        Ok(AppInstance::Fbp {
            runtime: Box::new(runtime),
            seen: app.observed.iter().map(|s| (*s, 0)).collect(),
            observed: app.observed,
        })
    }

    pub fn start_soa(app: SoaApp) -> Result<Self, SoaError> {
        let mut registry = Registry::new();
        for s in &app.services {
            registry.register(s.clone())?;
        }
        Ok(AppInstance::Soa {
            registry,
            app,
            buffer: Vec::new(),
        })
    }

    pub fn deliver(&mut self, event: &Event) -> Result<(), SimError> {
        let tick = event.tick;
        match self {
            AppInstance::Fbp { runtime, .. } => {
                let bad = |reason: String| SimError::BadEvent {
                    tick,
                    kind: event.kind.clone(),
                    reason,
                };
                let schema = &runtime
                    .log(&event.kind)
                    .ok_or_else(|| bad("no such input stream".into()))?
                    .decl
                    .schema;
                let values = schema.from_json(&event.payload).map_err(bad)?;
                runtime
                    .inject(&event.kind, values)
                    .map_err(|source| SimError::Runtime { tick, source })?;
            }
            AppInstance::Soa { registry, app, buffer } => {
                let (service, api) = app.route(&event.kind).ok_or_else(|| SimError::BadEvent {
                    tick,
                    kind: event.kind.clone(),
                    reason: "no route".into(),
                })?;
                registry.set_tick(tick);
                let resp = registry
                    .call("sim", service, api, &event.payload)
                    .map_err(|source| SimError::Service { tick, source })?;
                buffer.extend((app.observe)(api, &resp));
            }
        }
        Ok(())
    }

    /// Finishes `tick` and returns what became visible, grouped by kind.
    pub fn end_tick(&mut self, tick: u64) -> Result<Vec<Observation>, SimError> {
        let mut out = Vec::new();
        match self {
            AppInstance::Fbp {
                runtime,
                observed,
                seen,
            } => {
                runtime.step().map_err(|source| SimError::Runtime { tick, source })?;
                for stream in observed.iter() {
                    let log = runtime.log(stream).expect("observed stream exists");
                    let from = seen[stream];
                    for r in &log.records[from..] {
                        out.push(Observation::new(stream, log.decl.schema.to_json(&r.values)));
                    }
                    seen.insert(stream, log.records.len());
                }
            }
            AppInstance::Soa { registry, app, buffer } => {
                registry.set_tick(tick);
                for (service, api) in app.tick_hooks.clone() {
                    let resp = registry
                        .call("sim", service, api, &json!({}))
                        .map_err(|source| SimError::Service { tick, source })?;
                    buffer.extend((app.observe)(api, &resp));
                }
                out = std::mem::take(buffer);
            }
        }
        out.sort_by(|a, b| a.kind.cmp(&b.kind));
        Ok(out)
    }

    /// Per-stream record counts (flow graph) or per-api call counts
    /// (services), zero entries omitted.
    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        match self {
            AppInstance::Fbp { runtime, .. } => {
                for log in runtime.logs() {
                    if !log.records.is_empty() {
                        out.insert(log.decl.id.clone(), log.records.len() as u64);
                    }
                }
            }
            AppInstance::Soa { registry, .. } => {
                for t in registry.trace() {
                    *out.entry(format!("{}.{}", t.callee, t.api)).or_default() += 1;
                }
            }
        }
        out
    }

    pub fn runtime(&self) -> Option<&RuntimeInstance> {
        match self {
            AppInstance::Fbp { runtime, .. } => Some(runtime),
            AppInstance::Soa { .. } => None,
        }
    }

    pub fn registry(&self) -> Option<&Registry> {
        match self {
            AppInstance::Soa { registry, .. } => Some(registry),
            AppInstance::Fbp { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub app: AppName,
    pub paradigm: Paradigm,
    pub stage: Stage,
    pub seed: u64,
    pub ticks: u64,
    pub events: u64,
    pub counts: BTreeMap<String, u64>,
    pub observations: u64,
    /// sha256 over every observation in order
    pub digest: String,
    /// sha256 per observation kind
    pub digests: BTreeMap<String, String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        canonical(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedObservation {
    pub tick: u64,
    #[serde(flatten)]
    pub observation: Observation,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub events: Vec<Event>,
    pub observations: Vec<TimedObservation>,
    pub instance: AppInstance,
}

fn digest_lines<'a>(lines: impl Iterator<Item = &'a String>) -> String {
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn start_app(version: AppVersion, cfg: &BuildConfig) -> Result<AppInstance, SimError> {
    match version.paradigm {
        Paradigm::Fbp => AppInstance::start_fbp(build_fbp(version.app, version.stage, cfg))
            .map_err(|source| SimError::Runtime { tick: 0, source }),
        Paradigm::Soa => AppInstance::start_soa(build_soa(version.app, version.stage, cfg))
            .map_err(|source| SimError::Service { tick: 0, source }),
    }
}

/// Runs the tick loop with an explicit build configuration.
pub fn run_with(scenario: &Scenario, version: AppVersion, cfg: &BuildConfig) -> Result<RunOutcome, SimError> {
    if scenario.app != version.app {
        return Err(SimError::Unsupported(format!(
            "scenario is for {} but the version is {}",
            scenario.app,
            version.key()
        )));
    }
    let mut instance = start_app(version, cfg)?;
    let mut sim = Simulation::new(scenario);
    let mut events = Vec::new();
    let mut observations = Vec::new();
    for tick in 0..scenario.ticks {
        let batch = sim.generate_events(tick);
        for e in &batch {
            instance.deliver(e)?;
        }
        events.extend(batch);
        let seen = instance.end_tick(tick)?;
        sim.observe(tick, &seen);
        observations.extend(seen.into_iter().map(|observation| TimedObservation { tick, observation }));
    }

    let lines: Vec<String> = observations
        .iter()
        .map(|o| canonical(o).expect("observation serializes"))
        .collect();
    let mut by_kind: BTreeMap<String, Vec<&String>> = BTreeMap::new();
    for (o, line) in observations.iter().zip(&lines) {
        by_kind.entry(o.observation.kind.clone()).or_default().push(line);
    }
    let report = RunReport {
        app: version.app,
        paradigm: version.paradigm,
        stage: version.stage,
        seed: scenario.seed,
        ticks: scenario.ticks,
        events: events.len() as u64,
        counts: instance.counts(),
        observations: observations.len() as u64,
        digest: digest_lines(lines.iter()),
        digests: by_kind
            .into_iter()
            .map(|(k, v)| (k, digest_lines(v.into_iter())))
            .collect(),
    };
    Ok(RunOutcome {
        report,
        events,
        observations,
        instance,
    })
}

/// Runs the flow-graph data stage and joins its dataset.
pub fn collect_dataset(scenario: &Scenario) -> Result<Vec<DatasetRow>, SimError> {
    let spec = scenario
        .app
        .collection_spec()
        .ok_or_else(|| SimError::Unsupported(format!("{} writes no offline dataset", scenario.app)))?;
    let version = AppVersion::new(scenario.app, Paradigm::Fbp, Stage::Data);
    let outcome = run_with(scenario, version, &BuildConfig::placeholder(scenario.seed))?;
    let runtime = outcome.instance.runtime().expect("flow-graph run");
    Ok(collect(runtime, &spec)?)
}

/// Build configuration for a stage. The model stage of apps with offline
/// datasets trains on a data-stage run of the same scenario.
pub fn config_for(scenario: &Scenario, stage: Stage) -> Result<BuildConfig, SimError> {
    let mut cfg = BuildConfig::placeholder(scenario.seed);
    if stage == Stage::Ml {
        match scenario.app {
            AppName::RideAllocation => cfg.ride_model = ride::train(&collect_dataset(scenario)?)?,
            AppName::InsuranceClaims => cfg.claims_model = claims::train(&collect_dataset(scenario)?)?,
            _ => {}
        }
    }
    Ok(cfg)
}

/// Runs a scenario against an app version, training models if needed.
pub fn run_scenario(scenario: &Scenario, version: AppVersion) -> Result<RunReport, SimError> {
    let cfg = config_for(scenario, version.stage)?;
    Ok(run_with(scenario, version, &cfg)?.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(s: &Scenario) -> Vec<Event> {
        let mut sim = Simulation::new(s);
        (0..s.ticks).flat_map(|t| sim.generate_events(t)).collect()
    }

    #[test]
    fn zero_rate_means_no_arrivals() {
        let s = Scenario::new(AppName::InsuranceClaims, 3, 50).with_arrival_rate(0.0);
        assert!(events(&s).is_empty());
        let s = Scenario::new(AppName::RideAllocation, 3, 50).with_arrival_rate(0.0);
        assert!(events(&s).iter().all(|e| e.kind == "drivers"));
    }

    #[test]
    fn noiseless_pickup_lands_at_rounded_wait() {
        let s = Scenario::new(AppName::RideAllocation, 9, 1).with_noise(0.0);
        let mut sim = Simulation::new(&s);
        let evs = sim.generate_events(0);
        let req = evs.iter().find(|e| e.kind == "ride_requests");
        let Some(req) = req else { return };
        let driver = evs.iter().find(|e| e.kind == "drivers").unwrap();
        let d = ride::distance(
            req.payload["x"].as_f64().unwrap(),
            req.payload["y"].as_f64().unwrap(),
            driver.payload["x"].as_f64().unwrap(),
            driver.payload["y"].as_f64().unwrap(),
        );
        let obs = Observation::new(
            "assignments",
            json!({"ride_id": req.payload["ride_id"], "driver_id": driver.payload["driver_id"]}),
        );
        sim.observe(0, &[obs]);
        let w = 2.0 * d + 1.0;
        let at = w.round() as u64;
        let mut pickups = Vec::new();
        for t in 1..=at + 6 {
            pickups.extend(sim.generate_events(t).into_iter().filter(|e| e.kind == "pickups"));
        }
        assert_eq!(pickups.len(), 1);
        assert_eq!(pickups[0].tick, at);
        assert!((pickups[0].payload["pickup_time"].as_f64().unwrap() - w).abs() < 1e-12);
    }

    #[test]
    fn same_scenario_same_events() {
        for app in AppName::ALL {
            let s = Scenario::new(app, 5, 30);
            assert_eq!(events(&s), events(&s));
        }
    }

    #[test]
    fn zero_ticks_is_an_empty_report() {
        let s = Scenario::new(AppName::PlaylistBuilder, 1, 0);
        let r = run_scenario(&s, AppVersion::new(AppName::PlaylistBuilder, Paradigm::Fbp, Stage::Min)).unwrap();
        assert_eq!((r.events, r.observations), (0, 0));
        assert!(r.counts.is_empty() && r.digests.is_empty());
    }

    #[test]
    fn mismatched_app_is_rejected() {
        let s = Scenario::new(AppName::PlaylistBuilder, 1, 3);
        assert!(run_scenario(&s, AppVersion::new(AppName::Mblogger, Paradigm::Fbp, Stage::Min)).is_err());
    }

    #[test]
    fn ride_paradigms_agree() {
        let s = Scenario::new(AppName::RideAllocation, 7, 100);
        let f = run_scenario(&s, AppVersion::new(AppName::RideAllocation, Paradigm::Fbp, Stage::Min)).unwrap();
        let o = run_scenario(&s, AppVersion::new(AppName::RideAllocation, Paradigm::Soa, Stage::Min)).unwrap();
        assert!(f.observations > 0);
        assert_eq!(f.digest, o.digest);
    }
}
