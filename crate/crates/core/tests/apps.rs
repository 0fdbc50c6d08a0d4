use std::collections::BTreeSet;

use doaflow::apps::mblogger::{timeline, Follow, Post, TIMELINE_LEN};
use doaflow::apps::playlist::{build_playlist, genre_threshold, Movie};
use doaflow::apps::{AppName, AppVersion, Paradigm, Stage};
use doaflow::sim::{config_for, run_with, RunReport, Scenario};
use proptest::prelude::*;

fn report(app: AppName, paradigm: Paradigm, stage: Stage, seed: u64, ticks: u64) -> RunReport {
    let scenario = Scenario::new(app, seed, ticks);
    let cfg = config_for(&scenario, stage).unwrap();
    run_with(&scenario, AppVersion::new(app, paradigm, stage), &cfg).unwrap().report
}

/// Filter by a nested scan of the follow log, then pick the newest
/// `TIMELINE_LEN` one at a time.
fn timeline_oracle(user: i64, follows: &[Follow], posts: &[Post]) -> Vec<i64> {
    let mut pool: Vec<&Post> = Vec::new();
    for p in posts {
        let mut followed = false;
        for f in follows {
            if f.follower == user && f.followee == p.author && f.tick <= p.tick {
                followed = true;
            }
        }
        if followed {
            pool.push(p);
        }
    }
    let mut out = Vec::new();
    while out.len() < TIMELINE_LEN && !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            if (pool[i].tick, pool[i].post_id) > (pool[best].tick, pool[best].post_id) {
                best = i;
            }
        }
        out.push(pool.remove(best).post_id);
    }
    out
}

proptest! {
    #[test]
    fn timeline_matches_nested_loop(
        follows in prop::collection::vec((0i64..4, 0i64..6, 0u64..20), 0..15),
        posts in prop::collection::vec((0i64..6, 0u64..20), 0..80),
        user in 0i64..4,
    ) {
        let mut seen = BTreeSet::new();
        let follows: Vec<Follow> = follows
            .into_iter()
            .filter(|&(a, b, _)| seen.insert((a, b)))
            .map(|(follower, followee, tick)| Follow { follower, followee, tick })
            .collect();
        let posts: Vec<Post> = posts
            .into_iter()
            .enumerate()
            .map(|(i, (author, tick))| Post { post_id: i as i64, author, text: String::new(), tick })
            .collect();
        prop_assert_eq!(timeline(user, &follows, &posts), timeline_oracle(user, &follows, &posts));
    }
}

#[test]
fn timeline_examples() {
    assert!(timeline(1, &[], &[]).is_empty());
    let follows = [Follow { follower: 1, followee: 2, tick: 0 }];
    let posts = [Post { post_id: 9, author: 2, text: "hi".into(), tick: 3 }];
    assert_eq!(timeline(1, &follows, &posts), vec![9]);
}

fn movie(title: &str, genre: &str, gross: f64) -> Movie {
    Movie { title: title.into(), genre: genre.into(), gross }
}

#[test]
fn playlist_examples() {
    let one = [movie("solo", "drama", 5.0), movie("other", "comedy", 9.0)];
    assert_eq!(build_playlist(1, 1, "drama", 3, &one, None), vec!["solo".to_string()]);
    assert!(build_playlist(1, 1, "horror", 3, &one, None).is_empty());

    let four = [movie("a", "g", 10.0), movie("b", "g", 20.0), movie("c", "g", 30.0), movie("d", "g", 40.0)];
    let q = genre_threshold("g", &four);
    assert_eq!(q, Some(30.0));
    let pool: BTreeSet<String> = build_playlist(3, 7, "g", 10, &four, q).into_iter().collect();
    assert_eq!(pool, BTreeSet::from(["c".to_string(), "d".to_string()]));
    assert_eq!(build_playlist(5, 2, "g", 2, &four, None), build_playlist(5, 2, "g", 2, &four, None));
}

#[test]
fn paradigms_agree_at_every_stage() {
    for app in AppName::ALL {
        for stage in [Stage::Min, Stage::Data, Stage::Ml] {
            for seed in [1, 2, 3] {
                let fbp = report(app, Paradigm::Fbp, stage, seed, 60);
                let soa = report(app, Paradigm::Soa, stage, seed, 60);
                assert!(fbp.observations > 0, "{app} {stage}");
                assert_eq!(fbp.digests, soa.digests, "{app} {stage} seed {seed}");
                assert_eq!(fbp.digest, soa.digest);
                assert_eq!(fbp.events, soa.events);
            }
        }
    }
}

// Adding collection leaves business outputs alone. Adding the model keeps
// every earlier output too, except playlists, which the quantile filter is
// meant to change. The claims tree is trained on this very run, so its
// decisions must reproduce the rule chain's.
#[test]
fn later_stages_keep_earlier_outputs() {
    for app in AppName::ALL {
        for paradigm in [Paradigm::Fbp, Paradigm::Soa] {
            let min = report(app, paradigm, Stage::Min, 4, 80);
            let data = report(app, paradigm, Stage::Data, 4, 80);
            assert_eq!(min.digests, data.digests, "{app} {paradigm}");
            let ml = report(app, paradigm, Stage::Ml, 4, 80);
            for (kind, digest) in &data.digests {
                assert!(ml.digests.contains_key(kind), "{app} {paradigm} lost {kind}");
                if app != AppName::PlaylistBuilder {
                    assert_eq!(&ml.digests[kind], digest, "{app} {paradigm} {kind}");
                }
            }
        }
    }
}
