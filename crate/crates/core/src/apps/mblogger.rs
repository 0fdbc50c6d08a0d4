//! Microblogging: timelines built from followed authors' posts, online
//! interest corpora, and a bigram bot posting on behalf of one user.

use std::collections::BTreeSet;

use serde_json::json;

use super::{int, schema, text, BuildConfig, FbpApp, Observation, SoaApp, Stage};
use crate::graph::{Emissions, FieldType::*, FlowGraph, NodeContext, Schema, StreamCategory::*, TransformError};
use crate::ml::{fit_bigram, generate, SplitMix64};
use crate::soa::{field_i64, field_str, ApiSpec, Document, RoutineSpec, ServiceSpec, SoaError, Store};

pub const TIMELINE_LEN: usize = 50;
/// The user the bot writes for.
pub const BOT_TARGET: i64 = 0;
pub const BOT_MAX_TOKENS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Follow {
    pub follower: i64,
    pub followee: i64,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub post_id: i64,
    pub author: i64,
    pub text: String,
    pub tick: u64,
}

fn follows_at(follows: &[Follow], follower: i64, followee: i64, tick: u64) -> bool {
    follows
        .iter()
        .any(|f| f.follower == follower && f.followee == followee && f.tick <= tick)
}

/// Posts by authors `user` followed at the post's tick, newest first by
/// `(tick, post_id)`, at most [`TIMELINE_LEN`].
pub fn timeline(user: i64, follows: &[Follow], posts: &[Post]) -> Vec<i64> {
    let mut hits: Vec<(u64, i64)> = posts
        .iter()
        .filter(|p| follows_at(follows, user, p.author, p.tick))
        .map(|p| (p.tick, p.post_id))
        .collect();
    hits.sort_unstable_by(|a, b| b.cmp(a));
    hits.truncate(TIMELINE_LEN);
    hits.into_iter().map(|(_, id)| id).collect()
}

pub fn join_ids(ids: &[i64]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Users who receive `post` in their interest corpus, ascending.
pub fn interested_users(post: &Post, follows: &[Follow]) -> Vec<i64> {
    let set: BTreeSet<i64> = follows
        .iter()
        .filter(|f| f.followee == post.author && f.tick <= post.tick)
        .map(|f| f.follower)
        .collect();
    set.into_iter().collect()
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

/// One bot post from a user's corpus. The generator is seeded by the run
/// seed, the user and the corpus size, so the output depends only on data.
pub fn bot_post(seed: u64, user: i64, corpus: &[String]) -> String {
    let docs: Vec<Vec<String>> = corpus.iter().map(|t| tokenize(t)).collect();
    let model = fit_bigram(&docs);
    let mut rng = SplitMix64::derive(seed, &[user as u64, corpus.len() as u64]);
    generate(&model, &mut rng, BOT_MAX_TOKENS).join(" ")
}

fn s_follows() -> Schema {
    schema("follow", &[("follower", Int), ("followee", Int)])
}
fn s_posts() -> Schema {
    schema("post", &[("post_id", Int), ("author", Int), ("text", Text)])
}
fn s_requests() -> Schema {
    schema("timeline_request", &[("request_id", Int), ("user_id", Int)])
}
fn s_timelines() -> Schema {
    schema("timeline", &[("request_id", Int), ("user_id", Int), ("post_ids", Text)])
}
fn s_interest() -> Schema {
    schema("interest", &[("user_id", Int), ("post_id", Int), ("tokens", Text)])
}
fn s_bot_posts() -> Schema {
    schema("bot_post", &[("user_id", Int), ("text", Text)])
}

fn read_follows(ctx: &NodeContext<'_>) -> Result<Vec<Follow>, TransformError> {
    ctx.port("follows")?
        .rows()
        .map(|r| {
            Ok(Follow {
                follower: r.int("follower")?,
                followee: r.int("followee")?,
                tick: r.tick(),
            })
        })
        .collect()
}

fn post_of(r: &crate::graph::Row<'_>) -> Result<Post, TransformError> {
    Ok(Post {
        post_id: r.int("post_id")?,
        author: r.int("author")?,
        text: r.text("text")?.to_string(),
        tick: r.tick(),
    })
}

fn timeline_builder(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let follows = read_follows(ctx)?;
    let posts: Vec<Post> = ctx.port("posts")?.rows().map(|r| post_of(&r)).collect::<Result<_, _>>()?;
    let mut out = Emissions::new();
    for r in ctx.port("requests")?.delta_rows() {
        let user = r.int("user_id")?;
        let ids = timeline(user, &follows, &posts);
        out.emit("timelines", vec![int(r.int("request_id")?), int(user), text(join_ids(&ids))]);
    }
    Ok(out)
}

fn interest_tracker(ctx: &NodeContext<'_>) -> Result<Emissions, TransformError> {
    let follows = read_follows(ctx)?;
    let mut out = Emissions::new();
    for r in ctx.port("posts")?.delta_rows() {
        let post = post_of(&r)?;
        for user in interested_users(&post, &follows) {
            out.emit("corpus", vec![int(user), int(post.post_id), text(post.text.clone())]);
        }
    }
    Ok(out)
}

pub fn fbp(stage: Stage, cfg: &BuildConfig) -> FbpApp {
    let mut g = FlowGraph::new();
    g.add_stream("follows", Input, s_follows())
        .add_stream("posts", Input, s_posts())
        .add_stream("timeline_requests", Input, s_requests())
        .add_stream("timelines", Output, s_timelines());
    g.wire_node(
        "timeline_builder",
        "v1",
        &[("follows", "follows"), ("posts", "posts"), ("requests", "timeline_requests")],
        &[("timelines", "timelines")],
        timeline_builder,
    );
    if stage >= Stage::Data {
        let category = if stage >= Stage::Ml { Internal } else { Output };
        g.add_stream("interest_corpus", category, s_interest());
        g.wire_node(
            "interest_tracker",
            "v1",
            &[("follows", "follows"), ("posts", "posts")],
            &[("corpus", "interest_corpus")],
            interest_tracker,
        );
    }
    if stage >= Stage::Ml {
        let seed = cfg.seed;
        g.add_stream("bot_posts", Output, s_bot_posts());
        g.wire_node("bot", "v1", &[("corpus", "interest_corpus")], &[("posts", "bot_posts")], move |ctx| {
            let corpus = ctx.port("corpus")?;
            let mut out = Emissions::new();
            let mut grew = false;
            for r in corpus.delta_rows() {
                grew |= r.int("user_id")? == BOT_TARGET;
            }
            if grew {
                let texts: Vec<String> = corpus
                    .rows()
                    .filter(|r| r.int("user_id").ok() == Some(BOT_TARGET))
                    .map(|r| r.text("tokens").map(String::from))
                    .collect::<Result<_, _>>()?;
                out.emit("posts", vec![int(BOT_TARGET), text(bot_post(seed, BOT_TARGET, &texts))]);
            }
            Ok(out)
        });
    }
    let mut observed = vec!["timelines"];
    if stage >= Stage::Ml {
        observed.push("bot_posts");
    }
    FbpApp { graph: g, observed }
}

fn follows_from(doc: &Document) -> Result<Vec<Follow>, SoaError> {
    doc["follows"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|f| {
            Ok(Follow {
                follower: field_i64(f, "follower")?,
                followee: field_i64(f, "followee")?,
                tick: field_i64(f, "tick")? as u64,
            })
        })
        .collect()
}

fn users_service(stage: Stage) -> ServiceSpec {
    let mut svc = ServiceSpec::new("users")
        .api(ApiSpec::new("follow", "v1", &["follower", "followee"], &[], |req, ctx| {
            let doc = json!({
                "follower": field_i64(req, "follower")?,
                "followee": field_i64(req, "followee")?,
                "tick": ctx.tick(),
            });
            ctx.routine("save_follow", &doc)?;
            Ok(json!({}))
        }))
        .api(ApiSpec::new("following", "v1", &["user_id"], &["follows"], |req, ctx| {
            let user = field_i64(req, "user_id")?;
            let all = follows_from(&ctx.routine("load_follows", &json!({}))?)?;
            let mine: Vec<Document> = all
                .iter()
                .filter(|f| f.follower == user)
                .map(|f| json!({"follower": f.follower, "followee": f.followee, "tick": f.tick}))
                .collect();
            Ok(json!({ "follows": mine }))
        }))
        .routine(RoutineSpec::new("save_follow", "v1", &["follows"], |store, f| {
            let n = store.len("follows") as u64;
            store.put("follows", &Store::key(n), f.clone());
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new("load_follows", "v1", &["follows"], |store, _| {
            let all: Vec<Document> = store.scan("follows").map(|(_, d)| d.clone()).collect();
            Ok(json!({ "follows": all }))
        }));
    if stage >= Stage::Data {
        svc = svc.api(ApiSpec::new("followers", "v1", &["user_id"], &["follows"], |req, ctx| {
            let user = field_i64(req, "user_id")?;
            let all = follows_from(&ctx.routine("load_follows", &json!({}))?)?;
            let theirs: Vec<Document> = all
                .iter()
                .filter(|f| f.followee == user)
                .map(|f| json!({"follower": f.follower, "followee": f.followee, "tick": f.tick}))
                .collect();
            Ok(json!({ "follows": theirs }))
        }));
    }
    svc
}

fn posts_from(doc: &Document) -> Result<Vec<Post>, SoaError> {
    doc["posts"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|p| {
            Ok(Post {
                post_id: field_i64(p, "post_id")?,
                author: field_i64(p, "author")?,
                text: field_str(p, "text")?.to_string(),
                tick: field_i64(p, "tick")? as u64,
            })
        })
        .collect()
}

fn posts_service(stage: Stage) -> ServiceSpec {
    let fan_out = stage >= Stage::Data;
    let mut svc = ServiceSpec::new("posts")
        .api(ApiSpec::new(
            "publish",
            if fan_out { "v2" } else { "v1" },
            &["post_id", "author", "text"],
            &[],
            move |req, ctx| {
                let post = Post {
                    post_id: field_i64(req, "post_id")?,
                    author: field_i64(req, "author")?,
                    text: field_str(req, "text")?.to_string(),
                    tick: ctx.tick(),
                };
                ctx.routine(
                    "save_post",
                    &json!({"post_id": post.post_id, "author": post.author, "text": post.text, "tick": post.tick}),
                )?;
                if fan_out {
                    let f = ctx.call("users", "followers", &json!({ "user_id": post.author }))?;
                    for user in interested_users(&post, &follows_from(&f)?) {
                        ctx.routine(
                            "save_interest",
                            &json!({"user_id": user, "post_id": post.post_id, "tokens": post.text}),
                        )?;
                    }
                }
                Ok(json!({}))
            },
        ))
        .api(ApiSpec::new("all_posts", "v1", &[], &["posts"], |_, ctx| {
            ctx.routine("load_posts", &json!({}))
        }))
        .routine(RoutineSpec::new("save_post", "v1", &["posts"], |store, p| {
            let id = field_i64(p, "post_id")?;
            store.put("posts", &Store::key(id as u64), p.clone());
            Ok(json!({}))
        }))
        .routine(RoutineSpec::new("load_posts", "v1", &["posts"], |store, _| {
            let all: Vec<Document> = store.scan("posts").map(|(_, d)| d.clone()).collect();
            Ok(json!({ "posts": all }))
        }));
    if fan_out {
        svc = svc
            .api(ApiSpec::new("get_interest_corpus", "v1", &["user_id"], &["tokens"], |req, ctx| {
                ctx.routine("load_interest", req)
            }))
            .routine(RoutineSpec::new("save_interest", "v1", &["interest"], |store, row| {
                let n = store.len("interest") as u64;
                store.put("interest", &Store::key(n), row.clone());
                Ok(json!({}))
            }))
            .routine(RoutineSpec::new("load_interest", "v1", &["interest"], |store, req| {
                let user = field_i64(req, "user_id")?;
                let tokens: Vec<Document> = store
                    .scan("interest")
                    .filter(|(_, r)| r["user_id"].as_i64() == Some(user))
                    .map(|(_, r)| r["tokens"].clone())
                    .collect();
                Ok(json!({ "tokens": tokens }))
            }));
    }
    svc
}

fn timeline_service() -> ServiceSpec {
    ServiceSpec::new("timeline").api(ApiSpec::new(
        "get_timeline",
        "v1",
        &["request_id", "user_id"],
        &["request_id", "user_id", "post_ids"],
        |req, ctx| {
            let user = field_i64(req, "user_id")?;
            let follows = follows_from(&ctx.call("users", "following", &json!({ "user_id": user }))?)?;
            let posts = posts_from(&ctx.call("posts", "all_posts", &json!({}))?)?;
            let ids = timeline(user, &follows, &posts);
            Ok(json!({
                "request_id": field_i64(req, "request_id")?,
                "user_id": user,
                "post_ids": join_ids(&ids),
            }))
        },
    ))
}

fn bot_service(seed: u64) -> ServiceSpec {
    ServiceSpec::new("bot")
        .api(ApiSpec::new("generate_bot_post", "v1", &[], &["user_id", "text"], move |_, ctx| {
            let corpus = ctx.call("posts", "get_interest_corpus", &json!({ "user_id": BOT_TARGET }))?;
            let texts: Vec<String> = corpus["tokens"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|t| t.as_str().map(String::from))
                .collect();
            let state = ctx.routine("load_bot_state", &json!({}))?;
            let seen = state["corpus_len"].as_u64().unwrap_or(0) as usize;
            if texts.len() <= seen {
                return Ok(json!({}));
            }
            ctx.routine("save_bot_state", &json!({ "corpus_len": texts.len() }))?;
            Ok(json!({ "user_id": BOT_TARGET, "text": bot_post(seed, BOT_TARGET, &texts) }))
        }))
        .routine(RoutineSpec::new("load_bot_state", "v1", &["state"], |store, _| {
            Ok(store.get("state", "bot").cloned().unwrap_or(json!({})))
        }))
        .routine(RoutineSpec::new("save_bot_state", "v1", &["state"], |store, s| {
            store.put("state", "bot", s.clone());
            Ok(json!({}))
        }))
}

fn observe(api: &str, resp: &Document) -> Vec<Observation> {
    match api {
        "get_timeline" => vec![Observation::new("timelines", resp.clone())],
        "generate_bot_post" if resp.get("text").is_some() => vec![Observation::new("bot_posts", resp.clone())],
        _ => vec![],
    }
}

pub fn soa(stage: Stage, cfg: &BuildConfig) -> SoaApp {
    let mut services = vec![users_service(stage), posts_service(stage), timeline_service()];
    let mut tick_hooks = vec![];
    if stage >= Stage::Ml {
        services.push(bot_service(cfg.seed));
        tick_hooks.push(("bot", "generate_bot_post"));
    }
    SoaApp {
        services,
        routes: vec![
            ("follows", "users", "follow"),
            ("posts", "posts", "publish"),
            ("timeline_requests", "timeline", "get_timeline"),
        ],
        tick_hooks,
        observe,
    }
}
