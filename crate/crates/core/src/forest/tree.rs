//! CART decision trees grown on bootstrap samples with Gini splits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answers::AgreementLabel;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Gini impurity `1 - sum(p_i^2)` of a two-class node given as
/// `[disagreement, agreement]` counts.
pub fn gini_impurity(class_counts: [usize; 2]) -> Result<f64> {
    let total = class_counts[0] + class_counts[1];
    if total == 0 {
        return Err(Error::EmptyNode);
    }
    let total = total as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / total).powi(2)).sum::<f64>())
}

/// `n * gini`, cheaper to compare than the normalized form.
fn weighted_gini(pos: usize, total: usize) -> f64 {
    let (p, n) = (pos as f64, total as f64);
    let neg = n - p;
    n - (p * p + neg * neg) / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        disagreement: u32,
        total: u32,
    },
}

impl Node {
    fn leaf_label(disagreement: u32, total: u32) -> AgreementLabel {
        // ties go to disagreement
        if 2 * disagreement >= total {
            AgreementLabel::Disagreement
        } else {
            AgreementLabel::Agreement
        }
    }
}

/// A binary decision tree stored as a flat node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FlatTree", try_from = "FlatTree")]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf(&self, x: &[f64]) -> (u32, u32) {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { disagreement, total } => return (disagreement, total),
            }
        }
    }

    /// The majority class of the leaf reached by `x`.
    pub fn vote(&self, x: &[f64]) -> AgreementLabel {
        let (d, t) = self.leaf(x);
        Node::leaf_label(d, t)
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Struct-of-arrays form used in model files. Leaves carry feature `-1`.
#[derive(Serialize, Deserialize)]
struct FlatTree {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    votes_disagreement: Vec<u32>,
    votes_total: Vec<u32>,
}

impl From<DecisionTree> for FlatTree {
    fn from(tree: DecisionTree) -> Self {
        let n = tree.nodes.len();
        let mut flat = FlatTree {
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            votes_disagreement: Vec::with_capacity(n),
            votes_total: Vec::with_capacity(n),
        };
        for node in tree.nodes {
            let (f, t, l, r, d, tot) = match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => (feature as i64, threshold, left as u32, right as u32, 0, 0),
                Node::Leaf { disagreement, total } => (-1, 0.0, 0, 0, disagreement, total),
            };
            flat.feature.push(f);
            flat.threshold.push(t);
            flat.left.push(l);
            flat.right.push(r);
            flat.votes_disagreement.push(d);
            flat.votes_total.push(tot);
        }
        flat
    }
}

impl TryFrom<FlatTree> for DecisionTree {
    type Error = String;

    fn try_from(flat: FlatTree) -> std::result::Result<Self, String> {
        let n = flat.feature.len();
        if [
            flat.threshold.len(),
            flat.left.len(),
            flat.right.len(),
            flat.votes_disagreement.len(),
            flat.votes_total.len(),
        ]
        .iter()
        .any(|&len| len != n)
            || n == 0
        {
            return Err("tree arrays have inconsistent lengths".into());
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let node = if flat.feature[i] < 0 {
                let (d, t) = (flat.votes_disagreement[i], flat.votes_total[i]);
                if t == 0 || d > t {
                    return Err(format!("leaf {i} has invalid vote counts"));
                }
                Node::Leaf {
                    disagreement: d,
                    total: t,
                }
            } else {
                let (l, r) = (flat.left[i] as usize, flat.right[i] as usize);
                // children are always stored after their parent
                if l <= i || r <= i || l >= n || r >= n {
                    return Err(format!("node {i} has out-of-range children"));
                }
                Node::Split {
                    feature: flat.feature[i] as usize,
                    threshold: flat.threshold[i],
                    left: l,
                    right: r,
                }
            };
            nodes.push(node);
        }
        Ok(DecisionTree { nodes })
    }
}

pub(crate) struct TreeParams {
    pub features_per_split: usize,
    pub min_leaf_size: usize,
    pub max_depth: Option<usize>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// `n` indices drawn uniformly with replacement.
pub(crate) fn bootstrap_sample(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Grows one tree on the rows listed in `sample` (duplicates allowed).
pub(crate) fn grow_tree(
    x: &[FeatureVector],
    positive: &[bool],
    sample: Vec<usize>,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let n = sample.len();
    let dim = x[0].len();

    let mut nodes: Vec<Node> = Vec::new();
    let mut feature_order: Vec<usize> = (0..dim).collect();
    let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
    // (samples, depth, slot)
    let mut stack = vec![(sample, 0usize, 0usize)];
    nodes.push(Node::Leaf {
        disagreement: 0,
        total: 1,
    });

    while let Some((samples, depth, slot)) = stack.pop() {
        let total = samples.len();
        let pos = samples.iter().filter(|&&i| positive[i]).count();
        let leaf = Node::Leaf {
            disagreement: pos as u32,
            total: total as u32,
        };
        let stop = pos == 0
            || pos == total
            || total < 2 * params.min_leaf_size
            || params.max_depth.is_some_and(|d| depth >= d);
        let split = if stop {
            None
        } else {
            best_split(x, positive, &samples, params, &mut feature_order, &mut column, rng)
        };
        let Some(split) = split else {
            nodes[slot] = leaf;
            continue;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| x[i].0[split.feature] <= split.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(leaf);
        nodes.push(leaf);
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        // right first so the left subtree is expanded next
        stack.push((right, depth + 1, r));
        stack.push((left, depth + 1, l));
    }
    DecisionTree { nodes }
}

/// Searches features in a fresh random order until `features_per_split`
/// features admitting a valid split have been examined, and returns the split
/// with the lowest weighted Gini impurity. Features that are constant on the
/// node, or cannot honour `min_leaf_size`, do not count toward the quota.
fn best_split(
    x: &[FeatureVector],
    positive: &[bool],
    samples: &[usize],
    params: &TreeParams,
    feature_order: &mut [usize],
    column: &mut Vec<(f64, bool)>,
    rng: &mut ChaCha8Rng,
) -> Option<Split> {
    let dim = feature_order.len();
    let total = samples.len();
    let total_pos = samples.iter().filter(|&&i| positive[i]).count();
    let min_leaf = params.min_leaf_size.max(1);

    let mut best: Option<Split> = None;
    let mut examined = 0;
    for j in 0..dim {
        if examined >= params.features_per_split {
            break;
        }
        let k = rng.random_range(j..dim);
        feature_order.swap(j, k);
        let feature = feature_order[j];

        column.clear();
        column.extend(samples.iter().map(|&i| (x[i].0[feature], positive[i])));
        column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_pos = 0;
        let mut found = false;
        for s in 0..total - 1 {
            left_pos += usize::from(column[s].1);
            let (lo, hi) = (column[s].0, column[s + 1].0);
            if lo >= hi {
                continue;
            }
            let left_n = s + 1;
            let right_n = total - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            found = true;
            let score = weighted_gini(left_pos, left_n) + weighted_gini(total_pos - left_pos, right_n);
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature,
                    threshold,
                    score,
                });
            }
        }
        examined += usize::from(found);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity([5, 5]).unwrap(), 0.5);
        assert_eq!(gini_impurity([10, 0]).unwrap(), 0.0);
        // 1 - (0.75^2 + 0.25^2)
        assert!((gini_impurity([3, 1]).unwrap() - 0.375).abs() < 1e-15);
        assert!(matches!(gini_impurity([0, 0]), Err(Error::EmptyNode)));
    }

    #[test]
    fn weighted_gini_matches_definition() {
        for (p, n) in [(3, 4), (0, 7), (5, 10), (1, 1)] {
            let expected = n as f64 * gini_impurity([p, n - p]).unwrap();
            assert!((weighted_gini(p, n) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn leaf_ties_vote_disagreement() {
        assert_eq!(Node::leaf_label(2, 4), AgreementLabel::Disagreement);
        assert_eq!(Node::leaf_label(1, 4), AgreementLabel::Agreement);
    }

    fn grow(x: &[Vec<f64>], y: &[bool], mtry: usize, seed: u64) -> DecisionTree {
        let x: Vec<FeatureVector> = x.iter().cloned().map(FeatureVector).collect();
        let params = TreeParams {
            features_per_split: mtry,
            min_leaf_size: 1,
            max_depth: None,
        };
        let sample = (0..x.len()).collect();
        grow_tree(&x, y, sample, &params, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn xor_is_fit_exactly() {
        // no single split lowers impurity at the root; the tree must still split
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [false, true, true, false];
        for seed in 0..20 {
            let tree = grow(&x, &y, 1, seed);
            for (xi, &yi) in x.iter().zip(&y) {
                assert_eq!(tree.vote(xi).is_disagreement(), yi);
            }
            assert_eq!(tree.depth(), 2);
        }
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let x: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..16).map(|i| i % 2 == 0).collect();
        let fv: Vec<FeatureVector> = x.iter().cloned().map(FeatureVector).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shallow = TreeParams {
            features_per_split: 1,
            min_leaf_size: 1,
            max_depth: Some(2),
        };
        assert!(grow_tree(&fv, &y, (0..16).collect(), &shallow, &mut rng).depth() <= 2);
        let chunky = TreeParams {
            features_per_split: 1,
            min_leaf_size: 4,
            max_depth: None,
        };
        let tree = grow_tree(&fv, &y, (0..16).collect(), &chunky, &mut rng);
        assert!(tree.nodes().iter().all(|n| match n {
            Node::Leaf { total, .. } => *total >= 4,
            Node::Split { .. } => true,
        }));
    }

    #[test]
    fn one_hot_threshold_is_half() {
        let x = vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]];
        let tree = grow(&x, &[false, true, false, true], 1, 3);
        if let Node::Split { threshold, .. } = tree.nodes()[0] {
            assert_eq!(threshold, 0.5);
        }
    }

    #[test]
    fn flat_round_trip_and_validation() {
        let x = vec![vec![0.0, 2.0], vec![1.0, 3.0], vec![0.5, 2.5], vec![1.5, 0.0]];
        let tree = grow(&x, &[false, true, false, true], 2, 11);
        let json = serde_json::to_string(&tree).unwrap();
        let back: DecisionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);

        let bad =
            r#"{"feature":[0],"threshold":[0.5],"left":[1],"right":[2],"votes_disagreement":[0],"votes_total":[0]}"#;
        assert!(serde_json::from_str::<DecisionTree>(bad).is_err());
    }
}
