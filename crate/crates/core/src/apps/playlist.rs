//! Playlist builder: random genre playlists, later restricted to the
//! top-grossing quarter of each genre.

use std::collections::BTreeMap;

use serde_json::json;

use super::{float, int, schema, text, BuildConfig, FbpApp, Observation, SoaApp, Stage};
use crate::graph::{Emissions, FieldType::*, FlowGraph, NodeContext, Schema, StreamCategory::*, TransformError};
use crate::ml::{QuantileSketch, SplitMix64};
use crate::soa::{field_f64, field_i64, field_str, ApiSpec, Document, RoutineSpec, ServiceSpec, SoaError, Store};

pub const TOP_QUANTILE: f64 = 0.75;
pub const TITLE_SEPARATOR: &str = "|";

#[derive(Debug, Clone, PartialEq)]
pub struct Movie {
    pub title: String,
    pub genre: String,
    pub gross: f64,
}

/// Nearest-rank upper-quartile gross of a genre, `None` when it has no movies.
pub fn genre_threshold<'a>(genre: &str, movies: impl IntoIterator<Item = &'a Movie>) -> Option<f64> {
    let sketch = QuantileSketch::from_values(
        movies
            .into_iter()
            .filter(|m| m.genre == genre)
            .map(|m| m.gross),
    );
    sketch.quantile(TOP_QUANTILE).ok()
}

/// Uniform sample without replacement of `min(k, n)` titles, by a partial
/// Fisher-Yates shuffle of the candidates in arrival order.
pub fn sample(mut candidates: Vec<String>, k: usize, rng: &mut SplitMix64) -> Vec<String> {
    let take = k.min(candidates.len());
    for i in 0..take {
        let j = i + rng.below((candidates.len() - i) as u64) as usize;
        candidates.swap(i, j);
    }
    candidates.truncate(take);
    candidates
}

/// The playlist for one request. `min_gross` restricts candidates to the
/// top-grossing ones.
pub fn build_playlist(
    seed: u64,
    request_id: i64,
    genre: &str,
    k: i64,
    movies: &[Movie],
    min_gross: Option<f64>,
) -> Vec<String> {
    let candidates: Vec<String> = movies
        .iter()
        .filter(|m| m.genre == genre && min_gross.is_none_or(|t| m.gross >= t))
        .map(|m| m.title.clone())
        .collect();
    let mut rng = SplitMix64::derive(seed, &[request_id as u64]);
    sample(candidates, k.max(0) as usize, &mut rng)
}

fn s_movies() -> Schema {
    schema("movie", &[("title", Text), ("genre", Text), ("gross", Float)])
}
fn s_requests() -> Schema {
    schema("playlist_request", &[("request_id", Int), ("genre", Text), ("k", Int)])
}
fn s_playlists() -> Schema {
    schema("playlist", &[("request_id", Int), ("genre", Text), ("titles", Text)])
}
fn s_quantiles() -> Schema {
    schema("genre_quantile", &[("genre", Text), ("q75", Float), ("count", Int)])
}

fn read_movies(ctx: &NodeContext<'_>) -> Result<Vec<Movie>, TransformError> {
    ctx.port("movies")?
        .rows()
        .map(|r| {
            Ok(Movie {
                title: r.text("title")?.to_string(),
                genre: r.text("genre")?.to_string(),
                gross: r.float("gross")?,
            })
        })
        .collect()
}

fn quantile_tracker(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let movies = read_movies(ctx)?;
    let fresh = ctx.port("movies")?.delta_start;
    let mut touched: BTreeMap<&str, ()> = BTreeMap::new();
    for m in &movies[fresh..] {
        touched.insert(&m.genre, ());
    }
    let mut out = Emissions::new();
    for genre in touched.keys() {
        let count = movies.iter().filter(|m| m.genre == *genre).count();
        let q = genre_threshold(genre, &movies).expect("touched genre has movies");
        out.emit("quantiles", vec![text(*genre), float(q), int(count as i64)]);
    }
    Ok(out)
}

pub fn fbp(stage: Stage, cfg: &BuildConfig) -> FbpApp {
    let seed = cfg.seed;
    let mut g = FlowGraph::new();
    g.add_stream("movies", Input, s_movies())
        .add_stream("playlist_requests", Input, s_requests())
        .add_stream("playlists", Output, s_playlists());
    if stage >= Stage::Data {
        let category = if stage >= Stage::Ml { Internal } else { Output };
        g.add_stream("genre_quantiles", category, s_quantiles());
        g.wire_node("quantile_tracker", "v1", &[("movies", "movies")], &[("quantiles", "genre_quantiles")], quantile_tracker);
    }
    if stage >= Stage::Ml {
        g.wire_node(
            "playlist_builder",
            "v2",
            &[("movies", "movies"), ("requests", "playlist_requests"), ("quantiles", "genre_quantiles")],
            &[("playlists", "playlists")],
            move |ctx| {
                let movies = read_movies(ctx)?;
                let mut latest: BTreeMap<String, f64> = BTreeMap::new();
                for r in ctx.port("quantiles")?.rows() {
                    latest.insert(r.text("genre")?.to_string(), r.float("q75")?);
                }
                let mut out = Emissions::new();
                for r in ctx.port("requests")?.delta_rows() {
                    let genre = r.text("genre")?;
                    let id = r.int("request_id")?;
                    let titles = match latest.get(genre) {
                        Some(&t) => build_playlist(seed, id, genre, r.int("k")?, &movies, Some(t)),
                        None => Vec::new(),
                    };
                    out.emit("playlists", vec![int(id), text(genre), text(titles.join(TITLE_SEPARATOR))]);
                }
                Ok(out)
            },
        );
    } else {
        g.wire_node(
            "playlist_builder",
            "v1",
            &[("movies", "movies"), ("requests", "playlist_requests")],
            &[("playlists", "playlists")],
            move |ctx| {
                let movies = read_movies(ctx)?;
                let mut out = Emissions::new();
                for r in ctx.port("requests")?.delta_rows() {
                    let genre = r.text("genre")?;
                    let id = r.int("request_id")?;
                    let titles = build_playlist(seed, id, genre, r.int("k")?, &movies, None);
                    out.emit("playlists", vec![int(id), text(genre), text(titles.join(TITLE_SEPARATOR))]);
                }
                Ok(out)
            },
        );
    }
    FbpApp {
        graph: g,
        observed: vec!["playlists"],
    }
}

fn movies_from(doc: &Document) -> Result<Vec<Movie>, SoaError> {
    doc["movies"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|m| {
            Ok(Movie {
                title: field_str(m, "title")?.to_string(),
                genre: field_str(m, "genre")?.to_string(),
                gross: field_f64(m, "gross")?,
            })
        })
        .collect()
}

fn catalog_service(stage: Stage) -> ServiceSpec {
    let track_stats = stage >= Stage::Data;
    let mut svc = ServiceSpec::new("catalog")
        .api(ApiSpec::new(
            "add_movie",
            if track_stats { "v2" } else { "v1" },
            &["title", "genre", "gross"],
            &[],
            move |req, ctx| {
                ctx.routine("save_movie", req)?;
                if track_stats {
                    ctx.routine("save_stats", req)?;
                }
                Ok(json!({}))
            },
        ))
        .api(ApiSpec::new("movies_by_genre", "v1", &["genre"], &["movies"], |req, ctx| {
            ctx.routine("load_movies", req)
        }))
        .routine(RoutineSpec::new("save_movie", "v1", &["movies"], |store, m| {
            let n = store.len("movies") as u64;
            store.put("movies", &Store::key(n), m.clone());
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new("load_movies", "v1", &["movies"], |store, req| {
            let genre = field_str(req, "genre")?;
            let movies: Vec<Document> = store
                .scan("movies")
                .filter(|(_, m)| m["genre"].as_str() == Some(genre))
                .map(|(_, m)| m.clone())
                .collect();
            Ok(json!({ "movies": movies }))
        }));
    if track_stats {
        svc = svc
            .api(ApiSpec::new("genre_stats", "v1", &["genre"], &["q75", "count"], |req, ctx| {
                ctx.routine("load_stats", req)
            }))
            .routine(RoutineSpec::new("save_stats", "v1", &["stats"], |store, m| {
                let genre = field_str(m, "genre")?;
                let mut sketch: QuantileSketch = store
                    .get("stats", genre)
                    .map(|d| serde_json::from_value(d.clone()))
                    .transpose()
                    .map_err(|e| SoaError::Failed(e.to_string()))?
                    .unwrap_or_default();
                sketch.insert(field_f64(m, "gross")?);
                store.put("stats", genre, serde_json::to_value(&sketch).expect("sketch serializes"));
                Ok(json!({}))
            }))
            .routine(RoutineSpec::new("load_stats", "v1", &["stats"], |store, req| {
                let genre = field_str(req, "genre")?;
                let Some(doc) = store.get("stats", genre) else {
                    return Ok(json!({ "q75": null, "count": 0 }));
                };
                let sketch: QuantileSketch =
                    serde_json::from_value(doc.clone()).map_err(|e| SoaError::Failed(e.to_string()))?;
                let q = sketch.quantile(TOP_QUANTILE).map_err(|e| SoaError::Failed(e.to_string()))?;
                Ok(json!({ "q75": q, "count": sketch.len() }))
            }));
    }
    if stage >= Stage::Ml {
        svc = svc
            .api(ApiSpec::new("top_movies", "v1", &["genre"], &["movies"], |req, ctx| {
                let stats = ctx.routine("load_stats", req)?;
                if stats["q75"].is_null() {
                    return Ok(json!({ "movies": [] }));
                }
                ctx.routine("load_movies_above", &json!({ "genre": req["genre"], "min_gross": stats["q75"] }))
            }))
            .routine(RoutineSpec::new("load_movies_above", "v1", &["movies"], |store, req| {
                let genre = field_str(req, "genre")?;
                let min = field_f64(req, "min_gross")?;
                let movies: Vec<Document> = store
                    .scan("movies")
                    .filter(|(_, m)| m["genre"].as_str() == Some(genre) && m["gross"].as_f64().is_some_and(|g| g >= min))
                    .map(|(_, m)| m.clone())
                    .collect();
                Ok(json!({ "movies": movies }))
            }));
    }
    svc
}

fn builder_service(stage: Stage, seed: u64) -> ServiceSpec {
    let top_only = stage >= Stage::Ml;
    ServiceSpec::new("builder").api(ApiSpec::new(
        "build_playlist",
        if top_only { "v2" } else { "v1" },
        &["request_id", "genre", "k"],
        &["request_id", "genre", "titles"],
        move |req, ctx| {
            let id = field_i64(req, "request_id")?;
            let genre = field_str(req, "genre")?;
            let source = if top_only { "top_movies" } else { "movies_by_genre" };
            let movies = movies_from(&ctx.call("catalog", source, &json!({ "genre": genre }))?)?;
            // candidates are already filtered by the catalog
            let titles = build_playlist(seed, id, genre, field_i64(req, "k")?, &movies, None);
            Ok(json!({ "request_id": id, "genre": genre, "titles": titles.join(TITLE_SEPARATOR) }))
        },
    ))
}

fn observe(api: &str, resp: &Document) -> Vec<Observation> {
    match api {
        "build_playlist" => vec![Observation::new("playlists", resp.clone())],
        _ => vec![],
    }
}

pub fn soa(stage: Stage, cfg: &BuildConfig) -> SoaApp {
    SoaApp {
        services: vec![catalog_service(stage), builder_service(stage, cfg.seed)],
        routes: vec![
            ("movies", "catalog", "add_movie"),
            ("playlist_requests", "builder", "build_playlist"),
        ],
        tick_hooks: vec![],
        observe,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(title: &str, genre: &str, gross: f64) -> Movie {
        Movie { title: title.into(), genre: genre.into(), gross }
    }

    #[test]
    fn one_match_with_large_k() {
        let movies = [m("a", "drama", 1.0), m("b", "comedy", 2.0)];
        assert_eq!(build_playlist(1, 0, "drama", 3, &movies, None), vec!["a"]);
    }

    #[test]
    fn no_match_is_empty() {
        assert!(build_playlist(1, 0, "horror", 3, &[m("a", "drama", 1.0)], None).is_empty());
    }

    #[test]
    fn upper_quartile_pool() {
        let movies: Vec<Movie> = [10.0, 20.0, 30.0, 40.0]
            .iter()
            .enumerate()
            .map(|(i, &g)| m(&format!("t{i}"), "action", g))
            .collect();
        let t = genre_threshold("action", &movies).unwrap();
        assert_eq!(t, 30.0);
        let mut got = build_playlist(3, 9, "action", 10, &movies, Some(t));
        got.sort();
        assert_eq!(got, vec!["t2", "t3"]);
    }

    #[test]
    fn same_seed_same_playlist() {
        let movies: Vec<Movie> = (0..30).map(|i| m(&format!("t{i}"), "action", i as f64)).collect();
        let a = build_playlist(7, 4, "action", 5, &movies, None);
        assert_eq!(a, build_playlist(7, 4, "action", 5, &movies, None));
        assert_eq!(a.len(), 5);
        let mut dedup = a.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 5);
    }

    #[test]
    fn graphs_validate_at_every_stage() {
        let cfg = BuildConfig::placeholder(0);
        for stage in [Stage::Min, Stage::Data, Stage::Ml] {
            assert!(crate::graph::validate(&fbp(stage, &cfg).graph).is_empty(), "{stage}");
        }
    }
}
