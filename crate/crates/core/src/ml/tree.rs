use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MlError;

const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        label: String,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// taken when `features[feature] < threshold`
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub max_depth: usize,
    pub root: TreeNode,
}

impl TreeModel {
    /// A depth-0 tree that always answers `label`.
    pub fn constant(label: &str) -> Self {
        TreeModel {
            max_depth: 0,
            root: TreeNode::Leaf {
                label: label.to_string(),
            },
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn predict(&self, features: &[f64]) -> &str {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { label } => return label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let x = features.get(*feature).copied().unwrap_or(f64::NAN);
                    node = if x < *threshold { left } else { right };
                }
            }
        }
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// Majority class; ties go to the lexicographically smallest label.
fn majority(classes: &[String], counts: &[usize]) -> String {
    let mut best = 0;
    for i in 1..counts.len() {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    classes[best].clone()
}

struct Builder<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<usize>,
    classes: Vec<String>,
    dims: usize,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best (feature, threshold, gain) over midpoints of consecutive distinct values.
    fn best_split(&self, idx: &[usize], parent: &[usize]) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let parent_gini = gini(parent, n);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..self.dims {
            let mut order: Vec<usize> = idx.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.classes.len()];
            let mut right = parent.to_vec();
            for k in 0..n - 1 {
                let c = self.y[order[k]];
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                let weighted = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let gain = parent_gini - weighted;
                let threshold = lo + (hi - lo) / 2.0;
                // Features and thresholds are visited in ascending order, so
                // only a strictly better gain replaces the incumbent. A
                // zero-gain split is still taken: XOR-like labels need one.
                if best.is_none_or(|(_, _, g)| gain > g + GAIN_EPSILON) {
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }

    fn grow(&self, idx: Vec<usize>, depth: usize, max_depth: usize) -> TreeNode {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= max_depth || pure {
            return TreeNode::Leaf {
                label: majority(&self.classes, &counts),
            };
        }
        match self.best_split(&idx, &counts) {
            None => TreeNode::Leaf {
                label: majority(&self.classes, &counts),
            },
            Some((feature, threshold, _)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| self.x[i][feature] < threshold);
                TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(self.grow(l, depth + 1, max_depth)),
                    right: Box::new(self.grow(r, depth + 1, max_depth)),
                }
            }
        }
    }
}

/// Greedy top-down CART with Gini impurity.
pub fn fit_tree(rows: &[(Vec<f64>, String)], max_depth: usize) -> Result<TreeModel, MlError> {
    let first = rows.first().ok_or(MlError::Empty)?;
    let dims = first.0.len();
    for (i, (x, _)) in rows.iter().enumerate() {
        if x.len() != dims {
            return Err(MlError::Dimension {
                row: i,
                expected: dims,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MlError::NonFinite { row: i });
        }
    }
    let class_index: BTreeMap<&str, usize> = {
        let mut labels: Vec<&str> = rows.iter().map(|(_, y)| y.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let builder = Builder {
        x: rows.iter().map(|(x, _)| x.as_slice()).collect(),
        y: rows.iter().map(|(_, y)| class_index[y.as_str()]).collect(),
        classes: class_index.keys().map(|s| s.to_string()).collect(),
        dims,
    };
    let root = builder.grow((0..rows.len()).collect(), 0, max_depth);
    Ok(TreeModel { max_depth, root })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(data: &[(f64, &str)]) -> Vec<(Vec<f64>, String)> {
        data.iter().map(|&(x, y)| (vec![x], y.to_string())).collect()
    }

    #[test]
    fn single_class_is_a_leaf() {
        let m = fit_tree(&rows(&[(1.0, "a"), (2.0, "a")]), 4).unwrap();
        assert_eq!(m.depth(), 0);
        assert_eq!(m.predict(&[100.0]), "a");
    }

    #[test]
    fn one_dimensional_threshold() {
        let m = fit_tree(&rows(&[(1.0, "A"), (2.0, "A"), (8.0, "B"), (9.0, "B")]), 4).unwrap();
        match &m.root {
            TreeNode::Split { feature, threshold, left, right } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 5.0);
                assert_eq!(**left, TreeNode::Leaf { label: "A".into() });
                assert_eq!(**right, TreeNode::Leaf { label: "B".into() });
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(m.predict(&[1.0]), "A");
        for (x, y) in [(1.0, "A"), (2.0, "A"), (8.0, "B"), (9.0, "B")] {
            assert_eq!(m.predict(&[x]), y);
        }
    }

    #[test]
    fn majority_tie_breaks_lexicographically() {
        // identical features, can't split: tie between b and a -> a
        let m = fit_tree(&rows(&[(1.0, "b"), (1.0, "a")]), 3).unwrap();
        assert_eq!(m.predict(&[1.0]), "a");
    }

    #[test]
    fn depth_limit_is_respected() {
        let data: Vec<_> = (0..16).map(|i| (vec![i as f64], if i % 2 == 0 { "e" } else { "o" }.to_string())).collect();
        for depth in 0..4 {
            assert!(fit_tree(&data, depth).unwrap().depth() <= depth);
        }
    }

    #[test]
    fn split_ties_prefer_lowest_feature() {
        // both features separate perfectly
        let data = vec![
            (vec![0.0, 0.0], "x".to_string()),
            (vec![1.0, 1.0], "y".to_string()),
        ];
        match fit_tree(&data, 1).unwrap().root {
            TreeNode::Split { feature, threshold, .. } => assert_eq!((feature, threshold), (0, 0.5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn xor_is_separated_at_depth_two() {
        let data: Vec<_> = [(0.0, 0.0, "a"), (0.0, 1.0, "b"), (1.0, 0.0, "b"), (1.0, 1.0, "a")]
            .iter()
            .map(|&(p, q, y)| (vec![p, q], y.to_string()))
            .collect();
        let m = fit_tree(&data, 2).unwrap();
        for (x, y) in &data {
            assert_eq!(m.predict(x), y);
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(fit_tree(&[], 2), Err(MlError::Empty));
    }
}
