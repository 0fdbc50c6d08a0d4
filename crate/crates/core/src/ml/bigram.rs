use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SplitMix64;

pub const START: &str = "<s>";
pub const END: &str = "</s>";

/// Counts of adjacent token pairs, with sentinel start and end tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigramModel {
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
    pub vocabulary: BTreeSet<String>,
}

impl BigramModel {
    pub fn count(&self, from: &str, to: &str) -> u64 {
        self.counts
            .get(from)
            .and_then(|m| m.get(to))
            .copied()
            .unwrap_or(0)
    }
}

/// Counts every adjacent pair in each document, including `START -> first`
/// and `last -> END`. Empty documents contribute nothing.
pub fn fit_bigram<S: AsRef<str>>(documents: &[Vec<S>]) -> BigramModel {
    let mut model = BigramModel {
        counts: BTreeMap::new(),
        vocabulary: [START.to_string(), END.to_string()].into(),
    };
    for doc in documents {
        if doc.is_empty() {
            continue;
        }
        let tokens = std::iter::once(START)
            .chain(doc.iter().map(AsRef::as_ref))
            .chain(std::iter::once(END));
        let mut prev: Option<&str> = None;
        for t in tokens {
            model.vocabulary.insert(t.to_string());
            if let Some(p) = prev {
                *model
                    .counts
                    .entry(p.to_string())
                    .or_default()
                    .entry(t.to_string())
                    .or_default() += 1;
            }
            prev = Some(t);
        }
    }
    model
}

/// Walks the chain from `START`, sampling successors in proportion to their
/// counts, until `END` or `max_len` tokens.
pub fn generate(model: &BigramModel, rng: &mut SplitMix64, max_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = START.to_string();
    while out.len() < max_len {
        let Some(successors) = model.counts.get(&current) else { break };
        let total: u64 = successors.values().sum();
        if total == 0 {
            break;
        }
        let mut pick = rng.below(total);
        let mut next = None;
        for (tok, &c) in successors {
            if pick < c {
                next = Some(tok);
                break;
            }
            pick -= c;
        }
        let next = next.expect("pick is below the total count");
        if next == END {
            break;
        }
        out.push(next.clone());
        current = next.clone();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts
            .iter()
            .map(|t| t.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn single_chain_counts() {
        let m = fit_bigram(&docs(&["a b"]));
        let expected: BTreeMap<String, BTreeMap<String, u64>> = [
            (START.to_string(), [("a".to_string(), 1)].into()),
            ("a".to_string(), [("b".to_string(), 1)].into()),
            ("b".to_string(), [(END.to_string(), 1)].into()),
        ]
        .into();
        assert_eq!(m.counts, expected);
        assert!(m.vocabulary.contains(START) && m.vocabulary.contains(END));
    }

    #[test]
    fn empty_corpus() {
        let m = fit_bigram::<String>(&[]);
        assert!(m.counts.is_empty());
        assert!(generate(&m, &mut SplitMix64::new(1), 10).is_empty());
    }

    #[test]
    fn repeated_pairs() {
        let m = fit_bigram(&docs(&["a b a b"]));
        assert_eq!(m.count("a", "b"), 2);
        assert_eq!(m.count("b", "a"), 1);
    }

    #[test]
    fn deterministic_chain_regenerates() {
        let m = fit_bigram(&docs(&["a b"]));
        for seed in 0..20 {
            assert_eq!(generate(&m, &mut SplitMix64::new(seed), 10), vec!["a", "b"]);
        }
    }

    #[test]
    fn max_len_truncates() {
        let m = fit_bigram(&docs(&["a a a a a a"]));
        assert!(generate(&m, &mut SplitMix64::new(3), 2).len() <= 2);
    }
}
