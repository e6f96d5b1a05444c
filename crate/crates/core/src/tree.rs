//! Classification trees grown with information-gain splits and per-node
//! attribute subsampling.

use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::scalar::Feature;

/// Splits whose gain does not exceed this are treated as zero-gain.
const MIN_GAIN: f64 = 1e-12;

/// A node of a tree stored in preorder. The left child of an internal node
/// at index `i` is `i + 1`; the right child is `right`.
#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Internal { feature: usize, threshold: T, right: usize },
    Leaf { counts: Vec<u32> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// Nodes with fewer examples than this become leaves.
    pub min_leaf_size: usize,
    /// Features considered at each node (`d'`).
    pub attrs_per_node: usize,
    pub seed: u64,
}

impl TreeParams {
    /// Defaults for `d` features: leaf size 10 and `d' = floor(1 + log2 d)`.
    pub fn for_features(d: usize, seed: u64) -> Result<Self> {
        Ok(TreeParams {
            min_leaf_size: 10,
            attrs_per_node: attr_sample_size(d)?,
            seed,
        })
    }

    pub fn validate(&self, num_features: usize) -> Result<()> {
        if self.min_leaf_size == 0 {
            return Err(Error::validation("min_leaf_size must be at least 1"));
        }
        if self.attrs_per_node == 0 || self.attrs_per_node > num_features {
            return Err(Error::validation(format!(
                "attrs_per_node {} outside [1, {num_features}]",
                self.attrs_per_node
            )));
        }
        Ok(())
    }
}

/// Random-forest attribute sample size `floor(1 + log2 d)`, clamped to `[1, d]`.
pub fn attr_sample_size(d: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::validation("feature count must be at least 1"));
    }
    let floor_log2 = (usize::BITS - 1 - d.leading_zeros()) as usize;
    Ok((1 + floor_log2).clamp(1, d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<T> {
    pub feature: usize,
    pub threshold: T,
    pub gain: f64,
}

/// Finds the information-gain-maximizing split of the examples at `rows`
/// over the listed features.
///
/// Candidate thresholds are midpoints between consecutive distinct values;
/// examples with `value < threshold` go left. Ties in gain keep the lowest
/// feature index, then the lowest threshold. Returns `None` when no
/// candidate has positive gain.
pub fn best_split<T: Feature>(
    data: &[Example<T>],
    rows: &[usize],
    features: &[usize],
    num_classes: usize,
) -> Option<Split<T>> {
    if rows.is_empty() {
        return None;
    }
    let mut parent = vec![0u32; num_classes];
    for &r in rows {
        parent[data[r].label] += 1;
    }
    let n = rows.len() as f64;
    let parent_entropy = entropy(&parent, rows.len());
    if parent_entropy <= 0.0 {
        return None;
    }

    let mut sorted: Vec<(T, usize)> = Vec::with_capacity(rows.len());
    let mut left = vec![0u32; num_classes];
    let mut right = vec![0u32; num_classes];
    let mut best: Option<Split<T>> = None;

    let mut ordered: Vec<usize> = features.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    for &f in &ordered {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (data[r].features[f], data[r].label)));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        for i in 0..sorted.len() - 1 {
            let (v, y) = sorted[i];
            left[y] += 1;
            right[y] -= 1;
            let next = sorted[i + 1].0;
            if v.partial_cmp(&next) != Some(std::cmp::Ordering::Less) {
                continue;
            }
            let n_left = i + 1;
            let n_right = sorted.len() - n_left;
            let gain = parent_entropy
                - (n_left as f64 / n) * entropy(&left, n_left)
                - (n_right as f64 / n) * entropy(&right, n_right);
            if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(v, next),
                    gain,
                });
            }
        }
    }
    best
}

/// A threshold strictly above `lo` and at most `hi`.
fn midpoint<T: Feature>(lo: T, hi: T) -> T {
    let two = T::one() + T::one();
    let mid = lo / two + hi / two;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

fn entropy(counts: &[u32], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree<T> {
    nodes: Vec<Node<T>>,
    num_features: usize,
    num_classes: usize,
}

impl<T: Feature> DecisionTree<T> {
    /// Assembles a tree from preorder nodes, checking the structure.
    pub fn from_nodes(nodes: Vec<Node<T>>, num_features: usize, num_classes: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::validation("a tree needs at least one node"));
        }
        // A preorder walk must visit indices 0, 1, 2, ... in sequence; a wrong
        // `right` pointer breaks the sequence.
        let mut stack = vec![0usize];
        let mut visited = 0usize;
        while let Some(i) = stack.pop() {
            if i != visited || i >= nodes.len() {
                return Err(Error::validation(format!("node {i} is out of preorder position")));
            }
            visited += 1;
            match &nodes[i] {
                Node::Internal { feature, right, .. } => {
                    if *feature >= num_features {
                        return Err(Error::validation(format!(
                            "node {i} splits on feature {feature} >= {num_features}"
                        )));
                    }
                    if *right <= i + 1 {
                        return Err(Error::validation(format!("node {i} has an empty left subtree")));
                    }
                    stack.push(*right);
                    stack.push(i + 1);
                }
                Node::Leaf { counts } => {
                    if counts.len() != num_classes {
                        return Err(Error::validation(format!(
                            "leaf {i} has {} class counts, expected {num_classes}",
                            counts.len()
                        )));
                    }
                    if counts.iter().all(|&k| k == 0) {
                        return Err(Error::validation(format!("leaf {i} is empty")));
                    }
                }
            }
        }
        if visited != nodes.len() {
            return Err(Error::validation(format!(
                "tree has {} nodes but its structure covers {visited}",
                nodes.len()
            )));
        }
        Ok(DecisionTree {
            nodes,
            num_features,
            num_classes,
        })
    }

    /// Grows a full tree on the examples of `data` listed in `bite`
    /// (indices may repeat).
    pub fn fit(
        data: &[Example<T>],
        bite: &[usize],
        num_features: usize,
        num_classes: usize,
        params: &TreeParams,
    ) -> Result<Self> {
        if bite.is_empty() {
            return Err(Error::validation("cannot train a tree on an empty bite"));
        }
        params.validate(num_features)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut nodes: Vec<Node<T>> = Vec::new();
        // (rows, parent whose `right` must point at this node)
        let mut work: Vec<(Vec<usize>, Option<usize>)> = vec![(bite.to_vec(), None)];

        while let Some((rows, parent)) = work.pop() {
            let at = nodes.len();
            if let Some(p) = parent {
                if let Node::Internal { right, .. } = &mut nodes[p] {
                    *right = at;
                }
            }
            let mut counts = vec![0u32; num_classes];
            for &r in &rows {
                counts[data[r].label] += 1;
            }
            let pure = counts.iter().filter(|&&k| k > 0).count() <= 1;
            let split = if pure || rows.len() < params.min_leaf_size {
                None
            } else {
                let mut subset = index::sample(&mut rng, num_features, params.attrs_per_node).into_vec();
                subset.sort_unstable();
                best_split(data, &rows, &subset, num_classes)
            };
            match split {
                None => nodes.push(Node::Leaf { counts }),
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| data[i].features[s.feature] < s.threshold);
                    nodes.push(Node::Internal {
                        feature: s.feature,
                        threshold: s.threshold,
                        right: usize::MAX,
                    });
                    work.push((r, Some(at)));
                    work.push((l, None));
                }
            }
        }
        Ok(DecisionTree {
            nodes,
            num_features,
            num_classes,
        })
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        if x.len() != self.num_features {
            return Err(Error::validation(format!(
                "input has {} features, tree expects {}",
                x.len(),
                self.num_features
            )));
        }
        Ok(self.predict_unchecked(x))
    }

    /// Prediction without the dimension check; `x` must have `num_features` entries.
    pub fn predict_unchecked(&self, x: &[T]) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn leaf_counts(&self, x: &[T]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Internal {
                    feature,
                    threshold,
                    right,
                } => {
                    i = if x[*feature] < *threshold { i + 1 } else { *right };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((i, depth)) = stack.pop() {
            deepest = deepest.max(depth);
            if let Node::Internal { right, .. } = &self.nodes[i] {
                stack.push((*right, depth + 1));
                stack.push((i + 1, depth + 1));
            }
        }
        deepest
    }
}

/// Convenience wrapper: grows a tree on every example of `bite`.
pub fn train_tree<T: Feature>(
    bite: &[Example<T>],
    num_features: usize,
    num_classes: usize,
    params: &TreeParams,
) -> Result<DecisionTree<T>> {
    let rows: Vec<usize> = (0..bite.len()).collect();
    DecisionTree::fit(bite, &rows, num_features, num_classes, params)
}

/// Index of the largest count, lowest index on ties.
pub fn argmax<C: PartialOrd + Copy>(counts: &[C]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}
