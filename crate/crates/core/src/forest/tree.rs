use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForestConfig;
use crate::features::FeatureRow;

/// Splits whose Gini gain does not exceed this are treated as no gain.
pub(crate) const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training-sample counts per class (Normal, Aging).
    Leaf { counts: [u32; 2] },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

pub(crate) fn bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub(crate) fn gini(counts: [u32; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

pub(crate) fn gain(parent: [u32; 2], left: [u32; 2]) -> f64 {
    let right = [parent[0] - left[0], parent[1] - left[1]];
    let n = (parent[0] + parent[1]) as f64;
    let nl = (left[0] + left[1]) as f64;
    gini(parent) - (nl * gini(left) + (n - nl) * gini(right)) / n
}

fn class_counts(rows: &[FeatureRow], idx: &[usize]) -> [u32; 2] {
    let mut c = [0u32; 2];
    for &i in idx {
        c[usize::from(rows[i].label == 1)] += 1;
    }
    c
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best split of `idx` on one feature, honouring the leaf-size floor.
pub(crate) fn best_threshold(
    rows: &[FeatureRow],
    idx: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut pairs: Vec<(f64, u8)> = idx.iter().map(|&i| (rows[i].features[feature], rows[i].label)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let parent = class_counts(rows, idx);
    let mut left = [0u32; 2];
    let mut best: Option<(f64, f64)> = None;
    for pos in 1..pairs.len() {
        left[usize::from(pairs[pos - 1].1 == 1)] += 1;
        if pos < min_leaf || pairs.len() - pos < min_leaf {
            continue;
        }
        let (a, b) = (pairs[pos - 1].0, pairs[pos].0);
        if a == b {
            continue;
        }
        let g = gain(parent, left);
        if best.is_none_or(|(_, bg)| g > bg) {
            let mid = a + (b - a) / 2.0;
            best = Some((if mid < b { mid } else { a }, g));
        }
    }
    best
}

impl Tree {
    pub(crate) fn grow(
        rows: &[FeatureRow],
        mut sample: Vec<usize>,
        width: usize,
        cfg: &ForestConfig,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        let k = cfg.features_per_split.count(width);
        tree.grow_node(rows, &mut sample, 0, width, k, cfg, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_node(
        &mut self,
        rows: &[FeatureRow],
        idx: &mut [usize],
        depth: usize,
        width: usize,
        k: usize,
        cfg: &ForestConfig,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        let counts = class_counts(rows, idx);
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= cfg.max_depth || idx.len() < 2 * cfg.min_samples_leaf {
            return id;
        }

        let mut best: Option<Best> = None;
        for feature in sample(rng, width, k).into_iter() {
            if let Some((threshold, g)) = best_threshold(rows, idx, feature, cfg.min_samples_leaf) {
                if best.as_ref().is_none_or(|b| g > b.gain) {
                    best = Some(Best {
                        feature,
                        threshold,
                        gain: g,
                    });
                }
            }
        }
        let Some(best) = best.filter(|b| b.gain > GAIN_EPSILON) else {
            return id;
        };

        idx.sort_by_key(|&i| rows[i].features[best.feature] > best.threshold);
        let split = idx.partition_point(|&i| rows[i].features[best.feature] <= best.threshold);
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow_node(rows, l, depth + 1, width, k, cfg, rng);
        let right = self.grow_node(rows, r, depth + 1, width, k, cfg, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Index of the leaf reached by `features`.
    pub fn leaf_index(&self, features: &[f64]) -> usize {
        let mut id = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[id]
        {
            id = if features[feature] <= threshold { left } else { right };
        }
        id
    }

    pub fn leaf_counts(&self, features: &[f64]) -> [u32; 2] {
        match self.nodes[self.leaf_index(features)] {
            Node::Leaf { counts } => counts,
            Node::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }

    /// Leaf majority; an even leaf goes to Aging.
    pub fn predict(&self, features: &[f64]) -> u8 {
        let c = self.leaf_counts(features);
        u8::from(c[1] >= c[0])
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
