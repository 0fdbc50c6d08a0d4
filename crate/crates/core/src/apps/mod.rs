//! The four reference applications, each buildable as a flow graph or as a
//! set of services at three stages.

pub mod claims;
pub mod mblogger;
pub mod playlist;
pub mod ride;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::collection::CollectionSpec;
use crate::graph::{FieldType, FlowGraph, Schema, Value};
use crate::ml::{LinearModel, TreeModel};
use crate::soa::{Document, ServiceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppName {
    RideAllocation,
    Mblogger,
    InsuranceClaims,
    PlaylistBuilder,
}

impl AppName {
    pub const ALL: [AppName; 4] = [
        AppName::RideAllocation,
        AppName::Mblogger,
        AppName::InsuranceClaims,
        AppName::PlaylistBuilder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AppName::RideAllocation => "ride_allocation",
            AppName::Mblogger => "mblogger",
            AppName::InsuranceClaims => "insurance_claims",
            AppName::PlaylistBuilder => "playlist_builder",
        }
    }

    /// Apps whose data stage writes an offline dataset.
    pub fn has_offline_dataset(self) -> bool {
        matches!(self, AppName::RideAllocation | AppName::InsuranceClaims)
    }

    pub fn collection_spec(self) -> Option<CollectionSpec> {
        match self {
            AppName::RideAllocation => Some(ride::collection_spec()),
            AppName::InsuranceClaims => Some(claims::collection_spec()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Fbp,
    Soa,
}

impl Paradigm {
    pub const ALL: [Paradigm; 2] = [Paradigm::Fbp, Paradigm::Soa];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Fbp => "fbp",
            Paradigm::Soa => "soa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Min,
    Data,
    Ml,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Min, Stage::Data, Stage::Ml];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Min => "min",
            Stage::Data => "data",
            Stage::Ml => "ml",
        }
    }
}

macro_rules! text_enum {
    ($ty:ty, $what:literal) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!("unknown {} {s:?}", $what))
            }
        }
    };
}

text_enum!(AppName, "app");
text_enum!(Paradigm, "paradigm");
text_enum!(Stage, "stage");

/// One of the 24 buildable versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AppVersion {
    pub app: AppName,
    pub paradigm: Paradigm,
    pub stage: Stage,
}

impl AppVersion {
    pub fn new(app: AppName, paradigm: Paradigm, stage: Stage) -> Self {
        AppVersion { app, paradigm, stage }
    }

    /// e.g. `fb_ride_allocation_min`, `soa_mblogger_ml`
    pub fn key(&self) -> String {
        let p = match self.paradigm {
            Paradigm::Fbp => "fb",
            Paradigm::Soa => "soa",
        };
        format!("{p}_{}_{}", self.app, self.stage)
    }

    pub fn all() -> Vec<AppVersion> {
        let mut out = Vec::new();
        for app in AppName::ALL {
            for paradigm in Paradigm::ALL {
                for stage in Stage::ALL {
                    out.push(AppVersion::new(app, paradigm, stage));
                }
            }
        }
        out
    }
}

/// Models and seed baked into a build. Placeholders are untrained, which is
/// enough for structure-only uses such as manifests and DOT export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub seed: u64,
    pub ride_model: LinearModel,
    pub claims_model: TreeModel,
}

impl BuildConfig {
    pub fn placeholder(seed: u64) -> Self {
        BuildConfig {
            seed,
            ride_model: LinearModel {
                coefficients: vec![0.0; ride::FEATURES.len()],
                intercept: 0.0,
            },
            claims_model: TreeModel::constant(claims::Decision::Standard.as_str()),
        }
    }
}

/// Something the outside world can see an app produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: String,
    pub payload: Document,
}

impl Observation {
    pub fn new(kind: &str, payload: Document) -> Self {
        Observation {
            kind: kind.to_string(),
            payload,
        }
    }
}

pub struct FbpApp {
    pub graph: FlowGraph,
    /// Output streams whose records are visible to the outside world.
    pub observed: Vec<&'static str>,
}

pub type ObserveFn = fn(api: &str, response: &Document) -> Vec<Observation>;

pub struct SoaApp {
    pub services: Vec<ServiceSpec>,
    /// event kind -> (service, api)
    pub routes: Vec<(&'static str, &'static str, &'static str)>,
    /// (service, api) called once after every tick's events
    pub tick_hooks: Vec<(&'static str, &'static str)>,
    pub observe: ObserveFn,
}

impl SoaApp {
    pub fn route(&self, kind: &str) -> Option<(&'static str, &'static str)> {
        self.routes
            .iter()
            .find(|(k, _, _)| *k == kind)
            .map(|&(_, s, a)| (s, a))
    }
}

pub fn build_fbp(app: AppName, stage: Stage, cfg: &BuildConfig) -> FbpApp {
    match app {
        AppName::RideAllocation => ride::fbp(stage, cfg),
        AppName::Mblogger => mblogger::fbp(stage, cfg),
        AppName::InsuranceClaims => claims::fbp(stage, cfg),
        AppName::PlaylistBuilder => playlist::fbp(stage, cfg),
    }
}

pub fn build_soa(app: AppName, stage: Stage, cfg: &BuildConfig) -> SoaApp {
    match app {
        AppName::RideAllocation => ride::soa(stage, cfg),
        AppName::Mblogger => mblogger::soa(stage, cfg),
        AppName::InsuranceClaims => claims::soa(stage, cfg),
        AppName::PlaylistBuilder => playlist::soa(stage, cfg),
    }
}

/// Schema builder shorthand: `schema("s", &[("a", Int), ...])`.
pub(crate) fn schema(name: &str, fields: &[(&str, FieldType)]) -> Schema {
    fields
        .iter()
        .fold(Schema::new(name), |s, &(f, ty)| s.field(f, ty))
}

pub(crate) fn int(v: i64) -> Value {
    Value::Int(v)
}

pub(crate) fn float(v: f64) -> Value {
    Value::Float(v)
}

pub(crate) fn text(v: impl Into<String>) -> Value {
    Value::Text(v.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for app in AppName::ALL {
            assert_eq!(app.as_str().parse::<AppName>().unwrap(), app);
        }
        assert!("nosuchapp".parse::<AppName>().is_err());
        assert_eq!("soa".parse::<Paradigm>().unwrap(), Paradigm::Soa);
        assert_eq!("ml".parse::<Stage>().unwrap(), Stage::Ml);
    }

    #[test]
    fn version_keys() {
        let v = AppVersion::new(AppName::RideAllocation, Paradigm::Fbp, Stage::Min);
        assert_eq!(v.key(), "fb_ride_allocation_min");
        assert_eq!(AppVersion::all().len(), 24);
    }
}
