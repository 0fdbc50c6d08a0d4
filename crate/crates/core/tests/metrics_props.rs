use doaflow::apps::{AppName, AppVersion, Paradigm, Stage};
use doaflow::metrics::{diff, manifest, ComponentManifest};
use proptest::prelude::*;

fn manifest_strategy() -> impl Strategy<Value = ComponentManifest> {
    prop::collection::btree_map("[a-h]", "[xyz]", 0..8).prop_map(|components| ComponentManifest {
        version_key: "m".into(),
        components,
    })
}

proptest! {
    #[test]
    fn diff_is_symmetric_in_count(a in manifest_strategy(), b in manifest_strategy()) {
        let ab = diff(&a, &b);
        let ba = diff(&b, &a);
        prop_assert_eq!(ab.affected_count, ba.affected_count);
        prop_assert_eq!(&ab.added, &ba.removed);
        prop_assert_eq!(&ab.removed, &ba.added);
        prop_assert_eq!(&ab.changed, &ba.changed);
        prop_assert!(ab.added.is_disjoint(&ab.removed));
        prop_assert!(ab.added.is_disjoint(&ab.changed));
        prop_assert!(ab.removed.is_disjoint(&ab.changed));
        prop_assert_eq!(ab.affected_count, ab.added.len() + ab.removed.len() + ab.changed.len());
    }

    #[test]
    fn diff_obeys_triangle_inequality(a in manifest_strategy(), b in manifest_strategy(), c in manifest_strategy()) {
        let direct = diff(&a, &c).affected_count;
        prop_assert!(direct <= diff(&a, &b).affected_count + diff(&b, &c).affected_count);
        prop_assert_eq!(diff(&a, &a).affected_count, 0);
    }
}

#[test]
fn manifests_are_deterministic_and_cover_every_element() {
    for v in AppVersion::all() {
        let m = manifest(v);
        assert_eq!(m, manifest(v), "{}", v.key());
        assert_eq!(m.version_key, v.key());
        match v.paradigm {
            Paradigm::Fbp => {
                let g = doaflow::apps::build_fbp(v.app, v.stage, &doaflow::apps::BuildConfig::placeholder(0)).graph;
                assert_eq!(m.len(), g.nodes.len() + g.streams.len());
            }
            Paradigm::Soa => {
                let s = doaflow::apps::build_soa(v.app, v.stage, &doaflow::apps::BuildConfig::placeholder(0)).services;
                let n: usize = s.iter().map(|x| x.apis.len() + x.routines.len()).sum();
                assert_eq!(m.len(), n);
                assert!(m.components.keys().all(|k| k.contains('.')));
            }
        }
    }
}

#[test]
fn offline_dataset_apps_change_one_flow_component() {
    for app in [AppName::RideAllocation, AppName::InsuranceClaims] {
        let min = manifest(AppVersion::new(app, Paradigm::Fbp, Stage::Min));
        let data = manifest(AppVersion::new(app, Paradigm::Fbp, Stage::Data));
        assert_eq!(diff(&min, &data).affected_count, 1, "{app}");
    }
}
