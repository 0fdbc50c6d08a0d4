//! Insurance claims: a fixed rule chain routes each claim to a payout
//! process; the model stage replaces the chain with a decision tree.

use std::fmt;
use std::str::FromStr;

use serde_json::json;

use super::{float, int, schema, text, BuildConfig, FbpApp, Observation, SoaApp, Stage};
use crate::collection::{CollectionSpec, DatasetRow, Selection};
use crate::graph::{Emissions, FieldType::*, FlowGraph, NodeContext, Row, Schema, StreamCategory::*, TransformError, Value};
use crate::ml::{fit_tree, MlError, TreeModel};
use crate::soa::{field_bool, field_f64, field_i64, field_str, ApiSpec, Document, RoutineSpec, ServiceSpec, SoaError, Store};

pub const TREE_DEPTH: usize = 4;
pub const MANUAL_REVIEW_ABOVE: f64 = 10_000.0;
pub const FAST_TRACK_UP_TO: f64 = 1_000.0;
pub const FAST_TRACK_MAX_PRIOR: i64 = 2;

/// Claim amounts are discretized; each band sits on one side of a rule threshold.
pub const LOW_AMOUNTS: [f64; 4] = [250.0, 500.0, 750.0, 1_000.0];
pub const MID_AMOUNTS: [f64; 4] = [2_500.0, 5_000.0, 7_500.0, 10_000.0];
pub const HIGH_AMOUNTS: [f64; 3] = [15_000.0, 20_000.0, 25_000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClaimKind {
    Auto,
    Health,
    Home,
}

impl ClaimKind {
    pub const ALL: [ClaimKind; 3] = [ClaimKind::Auto, ClaimKind::Health, ClaimKind::Home];

    pub fn as_str(self) -> &'static str {
        match self {
            ClaimKind::Auto => "auto",
            ClaimKind::Health => "health",
            ClaimKind::Home => "home",
        }
    }
}

impl FromStr for ClaimKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown claim kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decision {
    Reject,
    ManualReview,
    FastTrack,
    Standard,
}

impl Decision {
    pub const ALL: [Decision; 4] = [Decision::Reject, Decision::ManualReview, Decision::FastTrack, Decision::Standard];

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::ManualReview => "manual_review",
            Decision::FastTrack => "fast_track",
            Decision::Standard => "standard",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown decision {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub claim_id: i64,
    pub kind: String,
    pub amount: f64,
    pub prior_claims: i64,
    pub flagged: bool,
}

pub fn rule_fraud(c: &Claim) -> Option<Decision> {
    c.flagged.then_some(Decision::Reject)
}

pub fn rule_amount(c: &Claim) -> Option<Decision> {
    (c.amount > MANUAL_REVIEW_ABOVE).then_some(Decision::ManualReview)
}

pub fn rule_category(c: &Claim) -> Result<Decision, String> {
    let kind: ClaimKind = c.kind.parse()?;
    if kind == ClaimKind::Auto && c.amount <= FAST_TRACK_UP_TO && c.prior_claims <= FAST_TRACK_MAX_PRIOR {
        Ok(Decision::FastTrack)
    } else {
        Ok(Decision::Standard)
    }
}

/// The full rule chain, evaluated in order.
pub fn claim_route(c: &Claim) -> Result<Decision, String> {
    c.kind.parse::<ClaimKind>()?;
    if let Some(d) = rule_fraud(c).or_else(|| rule_amount(c)) {
        return Ok(d);
    }
    rule_category(c)
}

/// One-hot kind (auto, health, home), amount, prior claims, flagged as 0/1.
pub fn featurize(c: &Claim) -> Result<Vec<f64>, String> {
    let kind: ClaimKind = c.kind.parse()?;
    let mut x: Vec<f64> = ClaimKind::ALL
        .iter()
        .map(|k| if *k == kind { 1.0 } else { 0.0 })
        .collect();
    x.extend([c.amount, c.prior_claims as f64, if c.flagged { 1.0 } else { 0.0 }]);
    Ok(x)
}

pub fn classify(model: &TreeModel, c: &Claim) -> Result<Decision, String> {
    model.predict(&featurize(c)?).parse()
}

pub fn collection_spec() -> CollectionSpec {
    CollectionSpec {
        dataset_name: "claim_decisions".into(),
        label: Selection::new("classified", &["decision"], "claim_id"),
        features: vec![Selection::new(
            "claims",
            &["kind", "amount", "prior_claims", "flagged"],
            "claim_id",
        )],
    }
}

/// Rebuilds the claim carried by a collected row.
pub fn claim_of_row(row: &DatasetRow) -> Option<Claim> {
    let f = &row.features;
    Some(Claim {
        claim_id: row.key.as_int()?,
        kind: f.get("kind")?.as_text()?.to_string(),
        amount: f.get("amount")?.as_float()?,
        prior_claims: f.get("prior_claims")?.as_int()?,
        flagged: f.get("flagged")?.as_bool()?,
    })
}

pub fn train(rows: &[DatasetRow]) -> Result<TreeModel, MlError> {
    let data: Vec<(Vec<f64>, String)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let x = claim_of_row(r).and_then(|c| featurize(&c).ok());
            let y = r.label.get("decision").and_then(|v| v.as_text());
            match (x, y) {
                (Some(x), Some(y)) => Ok((x, y.to_string())),
                _ => Err(MlError::NonFinite { row: i }),
            }
        })
        .collect::<Result<_, _>>()?;
    fit_tree(&data, TREE_DEPTH)
}

const CLAIM_FIELDS: [(&str, crate::graph::FieldType); 5] = [
    ("claim_id", Int),
    ("kind", Text),
    ("amount", Float),
    ("prior_claims", Int),
    ("flagged", Bool),
];

fn s_claims() -> Schema {
    schema("claim", &CLAIM_FIELDS)
}

/// A claim with the decision reached so far (empty text while pending).
fn s_screened(name: &str) -> Schema {
    let mut fields = CLAIM_FIELDS.to_vec();
    fields.push(("decision", Text));
    schema(name, &fields)
}

fn s_decisions() -> Schema {
    schema("decision", &[("claim_id", Int), ("decision", Text)])
}

fn claim_of(r: &Row<'_>) -> Result<Claim, TransformError> {
    Ok(Claim {
        claim_id: r.int("claim_id")?,
        kind: r.text("kind")?.to_string(),
        amount: r.float("amount")?,
        prior_claims: r.int("prior_claims")?,
        flagged: r.bool("flagged")?,
    })
}

fn screened(c: &Claim, decision: Option<Decision>) -> Vec<Value> {
    vec![
        int(c.claim_id),
        text(c.kind.clone()),
        float(c.amount),
        int(c.prior_claims),
        Value::Bool(c.flagged),
        text(decision.map_or("", Decision::as_str)),
    ]
}

fn pending(r: &Row<'_>) -> Result<Option<Decision>, TransformError> {
    let d = r.text("decision")?;
    if d.is_empty() {
        Ok(None)
    } else {
        d.parse().map(Some).map_err(TransformError)
    }
}

fn fraud_check(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let mut out = Emissions::new();
    for r in ctx.port("claims")?.delta_rows() {
        let c = claim_of(&r)?;
        c.kind.parse::<ClaimKind>().map_err(TransformError)?;
        out.emit("screened", screened(&c, rule_fraud(&c)));
    }
    Ok(out)
}

fn amount_check(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let mut out = Emissions::new();
    for r in ctx.port("claims")?.delta_rows() {
        let c = claim_of(&r)?;
        let d = pending(&r)?.or_else(|| rule_amount(&c));
        out.emit("screened", screened(&c, d));
    }
    Ok(out)
}

fn category_check(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let mut out = Emissions::new();
    for r in ctx.port("claims")?.delta_rows() {
        let c = claim_of(&r)?;
        let d = match pending(&r)? {
            Some(d) => d,
            None => rule_category(&c).map_err(TransformError)?,
        };
        out.emit("classified", screened(&c, Some(d)));
    }
    Ok(out)
}

fn payout(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let mut out = Emissions::new();
    for r in ctx.port("classified")?.delta_rows() {
        out.emit("decisions", vec![int(r.int("claim_id")?), text(r.text("decision")?)]);
    }
    Ok(out)
}

pub fn fbp(stage: Stage, cfg: &BuildConfig) -> FbpApp {
    let mut g = FlowGraph::new();
    g.add_stream("claims", Input, s_claims())
        .add_stream("classified", Internal, s_screened("classified_claim"))
        .add_stream("decisions", Output, s_decisions());
    if stage >= Stage::Ml {
        let model = cfg.claims_model.clone();
        g.wire_node("classifier", "v1", &[("claims", "claims")], &[("classified", "classified")], move |ctx| {
            let mut out = Emissions::new();
            for r in ctx.port("claims")?.delta_rows() {
                let c = claim_of(&r)?;
                let d = classify(&model, &c).map_err(TransformError)?;
                out.emit("classified", screened(&c, Some(d)));
            }
            Ok(out)
        });
    } else {
        g.add_stream("fraud_screened", Internal, s_screened("screened_claim"))
            .add_stream("amount_screened", Internal, s_screened("screened_claim"));
        g.wire_node("fraud_check", "v1", &[("claims", "claims")], &[("screened", "fraud_screened")], fraud_check);
        g.wire_node("amount_check", "v1", &[("claims", "fraud_screened")], &[("screened", "amount_screened")], amount_check);
        g.wire_node("category_check", "v1", &[("claims", "amount_screened")], &[("classified", "classified")], category_check);
    }
    g.wire_node("payout", "v1", &[("classified", "classified")], &[("decisions", "decisions")], payout);
    if stage >= Stage::Data {
        g.wire_node("dataset_collector", "v1", &[("labels", "classified")], &[], |_| Ok(Emissions::new()));
    }
    FbpApp {
        graph: g,
        observed: vec!["decisions"],
    }
}

fn claim_from_doc(doc: &Document) -> Result<Claim, SoaError> {
    Ok(Claim {
        claim_id: field_i64(doc, "claim_id")?,
        kind: field_str(doc, "kind")?.to_string(),
        amount: field_f64(doc, "amount")?,
        prior_claims: field_i64(doc, "prior_claims")?,
        flagged: field_bool(doc, "flagged")?,
    })
}

fn claim_doc(c: &Claim) -> Document {
    json!({
        "claim_id": c.claim_id,
        "kind": c.kind,
        "amount": c.amount,
        "prior_claims": c.prior_claims,
        "flagged": c.flagged,
    })
}

fn decision_doc(d: Option<Decision>) -> Document {
    json!({ "decision": d.map(Decision::as_str) })
}

const CLAIM_REQUEST: [&str; 5] = ["claim_id", "kind", "amount", "prior_claims", "flagged"];

fn intake_service(stage: Stage) -> ServiceSpec {
    let use_model = stage >= Stage::Ml;
    ServiceSpec::new("intake")
        .api(ApiSpec::new(
            "submit_claim",
            if use_model { "v2" } else { "v1" },
            &CLAIM_REQUEST,
            &["claim_id", "decision"],
            move |req, ctx| {
                let c = claim_from_doc(req)?;
                c.kind.parse::<ClaimKind>().map_err(SoaError::BadRequest)?;
                ctx.routine("save_claim", &claim_doc(&c))?;
                let decision = if use_model {
                    ctx.call("classifier", "classify", req)?
                } else {
                    let mut d = ctx.call("rules", "check_fraud", req)?;
                    if d["decision"].is_null() {
                        d = ctx.call("rules", "check_amount", req)?;
                    }
                    if d["decision"].is_null() {
                        d = ctx.call("rules", "check_category", req)?;
                    }
                    d
                };
                ctx.call(
                    "payout",
                    "process_payout",
                    &json!({ "claim_id": c.claim_id, "decision": decision["decision"] }),
                )
            },
        ))
        .api(ApiSpec::new("get_claim", "v1", &["claim_id"], &CLAIM_REQUEST, |req, ctx| {
            ctx.routine("load_claim", req)
        }))
        .routine(RoutineSpec::new("save_claim", "v1", &["claims"], |store, c| {
            let id = field_i64(c, "claim_id")?;
            store.put("claims", &Store::key(id as u64), c.clone());
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new("load_claim", "v1", &["claims"], |store, req| {
            let id = field_i64(req, "claim_id")?;
            store
                .get("claims", &Store::key(id as u64))
                .cloned()
                .ok_or_else(|| SoaError::Failed(format!("no claim {id}")))
        }))
}

fn rules_service() -> ServiceSpec {
    ServiceSpec::new("rules")
        .api(ApiSpec::new("check_fraud", "v1", &CLAIM_REQUEST, &["decision"], |req, _| {
            Ok(decision_doc(rule_fraud(&claim_from_doc(req)?)))
        }))
        .api(ApiSpec::new("check_amount", "v1", &CLAIM_REQUEST, &["decision"], |req, _| {
            Ok(decision_doc(rule_amount(&claim_from_doc(req)?)))
        }))
        .api(ApiSpec::new("check_category", "v1", &CLAIM_REQUEST, &["decision"], |req, _| {
            let d = rule_category(&claim_from_doc(req)?).map_err(SoaError::BadRequest)?;
            Ok(decision_doc(Some(d)))
        }))
}

fn classifier_service(model: &TreeModel) -> ServiceSpec {
    let mut svc = ServiceSpec::new("classifier")
        .api(ApiSpec::new("classify", "v1", &CLAIM_REQUEST, &["decision"], |req, ctx| {
            let m = ctx.routine("load_model", &json!({}))?;
            let model: TreeModel = serde_json::from_value(m).map_err(|e| SoaError::Failed(e.to_string()))?;
            let d = classify(&model, &claim_from_doc(req)?).map_err(SoaError::Failed)?;
            Ok(decision_doc(Some(d)))
        }))
        .routine(RoutineSpec::new("load_model", "v1", &["model"], |store, _| {
            store
                .get("model", "claims")
                .cloned()
                .ok_or_else(|| SoaError::Failed("no model loaded".into()))
        }));
    svc.store.put("model", "claims", serde_json::to_value(model).expect("model serializes"));
    svc
}

fn payout_service(stage: Stage) -> ServiceSpec {
    let keep_examples = stage >= Stage::Data;
    let mut svc = ServiceSpec::new("payout")
        .api(ApiSpec::new(
            "process_payout",
            if keep_examples { "v2" } else { "v1" },
            &["claim_id", "decision"],
            &["claim_id", "decision"],
            move |req, ctx| {
                let id = field_i64(req, "claim_id")?;
                let decision = field_str(req, "decision")?;
                ctx.routine("save_payout", req)?;
                if keep_examples {
                    let claim = ctx.call("intake", "get_claim", &json!({ "claim_id": id }))?;
                    ctx.routine("save_example", &json!({ "claim": claim, "decision": decision }))?;
                }
                Ok(json!({ "claim_id": id, "decision": decision }))
            },
        ))
        .routine(RoutineSpec::new("save_payout", "v1", &["payouts"], |store, p| {
            let id = field_i64(p, "claim_id")?;
            store.put("payouts", &Store::key(id as u64), p.clone());
            Ok(json!({}))
        }));
    if keep_examples {
        svc = svc
            .api(ApiSpec::new("export_dataset", "v1", &[], &["rows"], |_, ctx| {
                ctx.routine("load_examples", &json!({}))
            }))
            .routine(RoutineSpec::new("save_example", "v1", &["examples"], |store, e| {
                let n = store.len("examples") as u64;
                store.put("examples", &Store::key(n), e.clone());
                Ok(json!({}))
            }))
            .routine(RoutineSpec::new("load_examples", "v1", &["examples"], |store, _| {
                let rows: Vec<Document> = store
                    .scan("examples")
                    .map(|(_, e)| {
                        let c = &e["claim"];
                        json!({
                            "key": c["claim_id"],
                            "features": {
                                "kind": c["kind"],
                                "amount": c["amount"],
                                "prior_claims": c["prior_claims"],
                                "flagged": c["flagged"],
                            },
                            "label": { "decision": e["decision"] },
                        })
                    })
                    .collect();
                Ok(json!({ "rows": rows }))
            }));
    }
    svc
}

fn observe(api: &str, resp: &Document) -> Vec<Observation> {
    match api {
        "submit_claim" => vec![Observation::new("decisions", resp.clone())],
        _ => vec![],
    }
}

pub fn soa(stage: Stage, cfg: &BuildConfig) -> SoaApp {
    let mut services = vec![intake_service(stage), payout_service(stage)];
    if stage >= Stage::Ml {
        services.push(classifier_service(&cfg.claims_model));
    } else {
        services.push(rules_service());
    }
    SoaApp {
        services,
        routes: vec![("claims", "intake", "submit_claim")],
        tick_hooks: vec![],
        observe,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(kind: &str, amount: f64, prior: i64, flagged: bool) -> Claim {
        Claim { claim_id: 1, kind: kind.into(), amount, prior_claims: prior, flagged }
    }

    #[test]
    fn rule_chain_examples() {
        for amount in [0.0, 500.0, 50_000.0] {
            assert_eq!(claim_route(&claim("home", amount, 0, true)), Ok(Decision::Reject));
        }
        assert_eq!(claim_route(&claim("auto", 500.0, 0, false)), Ok(Decision::FastTrack));
        assert_eq!(claim_route(&claim("home", 20_000.0, 0, false)), Ok(Decision::ManualReview));
        assert_eq!(claim_route(&claim("auto", 500.0, 3, false)), Ok(Decision::Standard));
        assert_eq!(claim_route(&claim("health", 500.0, 0, false)), Ok(Decision::Standard));
        assert!(claim_route(&claim("boat", 1.0, 0, false)).is_err());
    }

    #[test]
    fn features_are_one_hot() {
        assert_eq!(featurize(&claim("health", 7.0, 2, true)).unwrap(), vec![0.0, 1.0, 0.0, 7.0, 2.0, 1.0]);
    }

    #[test]
    fn graphs_validate_at_every_stage() {
        let cfg = BuildConfig::placeholder(0);
        for stage in [Stage::Min, Stage::Data, Stage::Ml] {
            assert!(crate::graph::validate(&fbp(stage, &cfg).graph).is_empty(), "{stage}");
        }
    }

    // Every grid cell repeated in proportion to how often the scenario draws it.
    #[test]
    fn depth_four_tree_reproduces_rules_on_weighted_grid() {
        let amounts = LOW_AMOUNTS.iter().map(|&a| (a, 15))
            .chain(MID_AMOUNTS.iter().map(|&a| (a, 12)))
            .chain(HIGH_AMOUNTS.iter().map(|&a| (a, 4)));
        let mut rows = Vec::new();
        for (kind, wk) in [("auto", 8), ("health", 1), ("home", 1)] {
            for (amount, wa) in amounts.clone() {
                for prior in 0..6 {
                    let wp = if prior <= FAST_TRACK_MAX_PRIOR { 9 } else { 1 };
                    for (flagged, wf) in [(false, 4), (true, 1)] {
                        let c = claim(kind, amount, prior, flagged);
                        let row = (featurize(&c).unwrap(), claim_route(&c).unwrap().as_str().to_string());
                        rows.extend(std::iter::repeat_n(row, wk * wa * wp * wf));
                    }
                }
            }
        }
        let tree = fit_tree(&rows, TREE_DEPTH).unwrap();
        assert!(tree.depth() <= TREE_DEPTH);
        let wrong = rows.iter().filter(|(x, y)| tree.predict(x) != y.as_str()).count();
        assert_eq!(wrong, 0);
    }
}
