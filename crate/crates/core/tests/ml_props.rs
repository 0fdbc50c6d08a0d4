use std::collections::{BTreeMap, BTreeSet};

use doaflow::ml::{fit_bigram, fit_linear, fit_tree, generate, LinearModel, QuantileSketch, SplitMix64, END, START};
use proptest::prelude::*;

fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec("[a-e]", 0..8), 0..8)
}

fn sse(rows: &[(Vec<f64>, f64)], theta: &[f64]) -> f64 {
    let d = theta.len() - 1;
    rows.iter()
        .map(|(x, y)| {
            let p = theta[d] + x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            (p - y).powi(2)
        })
        .sum()
}

fn linear_rows() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    (1usize..5).prop_flat_map(|d| {
        prop::collection::vec((prop::collection::vec(-10.0f64..10.0, d), -10.0f64..10.0), d + 1..30)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bigram_counts_match_pair_counting(docs in corpus()) {
        let model = fit_bigram(&docs);
        let mut expected: BTreeMap<(String, String), u64> = BTreeMap::new();
        for d in docs.iter().filter(|d| !d.is_empty()) {
            let mut seq = vec![START.to_string()];
            seq.extend(d.iter().cloned());
            seq.push(END.to_string());
            for w in seq.windows(2) {
                *expected.entry((w[0].clone(), w[1].clone())).or_default() += 1;
            }
        }
        let mut seen = 0;
        for (from, next) in &model.counts {
            for (to, &c) in next {
                prop_assert_eq!(expected.get(&(from.clone(), to.clone())).copied(), Some(c));
                prop_assert!(model.vocabulary.contains(from) && model.vocabulary.contains(to));
                seen += 1;
            }
        }
        prop_assert_eq!(seen, expected.len());
    }

    #[test]
    fn generation_follows_observed_bigrams(docs in corpus(), seed in any::<u64>()) {
        let model = fit_bigram(&docs);
        let out = generate(&model, &mut SplitMix64::new(seed), 12);
        prop_assert_eq!(&out, &generate(&model, &mut SplitMix64::new(seed), 12));
        prop_assert!(out.len() <= 12);
        let mut prev = START.to_string();
        for t in &out {
            prop_assert!(model.count(&prev, t) > 0, "{prev} -> {t}");
            prev = t.clone();
        }
    }

    #[test]
    fn quantile_is_monotone_and_nearest_rank(values in prop::collection::vec(-1e6f64..1e6, 1..50), qs in prop::collection::vec(0u32..=100, 2..10)) {
        let sketch = QuantileSketch::from_values(values.clone());
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut qs = qs;
        qs.sort();
        let mut last = f64::NEG_INFINITY;
        for q in qs {
            // integer percent keeps the rank exact: ceil(q*n/100)
            let v = sketch.quantile(q as f64 / 100.0).unwrap();
            let rank = ((q as usize * sorted.len()).div_ceil(100)).max(1);
            prop_assert_eq!(v, sorted[rank - 1]);
            prop_assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn linear_fit_is_stationary(rows in linear_rows()) {
        let m = fit_linear(&rows).unwrap();
        let mut theta = m.coefficients.clone();
        theta.push(m.intercept);
        let h = 1e-6;
        for i in 0..theta.len() {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[i] += h;
            down[i] -= h;
            let g = (sse(&rows, &up) - sse(&rows, &down)) / (2.0 * h);
            prop_assert!(g.abs() < 1e-4, "d/dtheta[{i}] = {g}");
        }
    }

    #[test]
    fn linear_prediction_is_dot_plus_intercept(c in prop::collection::vec(-5.0f64..5.0, 1..5), b in -5.0f64..5.0, seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let x: Vec<f64> = c.iter().map(|_| rng.uniform(-10.0, 10.0)).collect();
        let mut sum = b;
        for i in 0..c.len() {
            sum += c[i] * x[i];
        }
        let m = LinearModel { coefficients: c, intercept: b };
        prop_assert!((m.predict(&x) - sum).abs() < 1e-9);
    }

    // Labels are a function of the feature vector; a depth of one less than
    // the number of distinct vectors always suffices.
    #[test]
    fn tree_fits_deterministic_labels(points in prop::collection::vec(prop::collection::vec(0u8..4, 3), 1..40), salt in any::<u64>()) {
        let label = |x: &[u8]| {
            let h = x.iter().fold(salt, |h, &v| h.rotate_left(7) ^ v as u64);
            ["a", "b", "c"][(SplitMix64::new(h).next_u64() % 3) as usize].to_string()
        };
        let rows: Vec<(Vec<f64>, String)> = points.iter().map(|x| (x.iter().map(|&v| v as f64).collect(), label(x))).collect();
        let distinct: BTreeSet<&Vec<u8>> = points.iter().collect();
        let tree = fit_tree(&rows, distinct.len().saturating_sub(1)).unwrap();
        for (x, y) in &rows {
            prop_assert_eq!(tree.predict(x), y.as_str());
        }
    }
}
