//! Axis-aligned regression trees and the smoother weights they imply.
//!
//! A tree routes a query to one leaf; its prediction is the
//! multiplicity-weighted mean of the training outcomes in that leaf, so the
//! weight on training row `i` is `c_i / sum_{j in leaf} c_j` for rows sharing
//! the query's leaf and zero elsewhere.
//!
//! Splits minimise multiplicity-weighted squared error. At every node the
//! features are put in a uniformly random order and the first `p_try` of
//! them are the split candidates; among equally good splits the feature that
//! comes first in that order wins. Each node draws its randomness from a
//! seed derived from its path in the tree, so the fitted structure does not
//! depend on the order in which nodes are expanded.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::weights::{Smoother, SmootherWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    /// Fraction `m` of features considered at each split.
    pub feature_fraction: f64,
    pub max_leaves: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            feature_fraction: 1.0,
            max_leaves: None,
            max_depth: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn with_feature_fraction(mut self, m: f64) -> Self {
        self.feature_fraction = m;
        self
    }

    pub fn with_max_leaves(mut self, max_leaves: Option<usize>) -> Self {
        self.max_leaves = max_leaves;
        self
    }

    pub fn with_max_depth(mut self, max_depth: Option<usize>) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.feature_fraction;
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::invalid(format!("feature fraction m must be in (0, 1], got {m}")));
        }
        if self.max_leaves == Some(0) {
            return Err(Error::invalid("max_leaves must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        Ok(())
    }

    /// `p_try = max(1, round(m * d))`.
    pub fn features_per_split(&self, feature_count: usize) -> usize {
        ((self.feature_fraction * feature_count as f64).round() as usize).clamp(1, feature_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(LeafId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    /// `(training row, multiplicity)` pairs sorted by row, multiplicity > 0.
    members: Vec<(usize, f64)>,
    weights: SmootherWeights,
    value: f64,
    depth: usize,
}

impl Leaf {
    fn new(members: Vec<(usize, f64)>, outcomes: &[f64], train_size: usize, depth: usize) -> Self {
        let total: f64 = members.iter().map(|&(_, c)| c).sum();
        let weights = SmootherWeights::from_sorted(members.iter().map(|&(i, c)| (i, c / total)).collect(), train_size);
        let value = weights.dot(outcomes);
        Leaf {
            members,
            weights,
            value,
            depth,
        }
    }

    pub fn members(&self) -> &[(usize, f64)] {
        &self.members
    }

    pub fn weights(&self) -> &SmootherWeights {
        &self.weights
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Sum of member multiplicities.
    pub fn weight_total(&self) -> f64 {
        self.members.iter().map(|&(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    depth: usize,
    multiplicities: Vec<f64>,
    feature_count: usize,
}

impl TreeModel {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn leaf(&self, id: LeafId) -> &Leaf {
        &self.leaves[id.0]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Per-row training multiplicity (all ones without bootstrapping).
    pub fn multiplicities(&self) -> &[f64] {
        &self.multiplicities
    }

    /// Route `x` to its leaf: left iff `x[feature] <= threshold`.
    pub fn leaf_of(&self, x: &[f64]) -> LeafId {
        debug_assert_eq!(x.len(), self.feature_count);
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[feature] <= threshold { left } else { right },
                Node::Leaf(id) => return id,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_of(x).0].value
    }

    pub fn tree_weights(&self, x: &[f64]) -> SmootherWeights {
        self.leaves[self.leaf_of(x).0].weights.clone()
    }

    /// Same structure and memberships, leaf values recomputed from
    /// `new_outcomes`.
    pub fn refit_leaves(&self, new_outcomes: &[f64]) -> Result<TreeModel> {
        if new_outcomes.len() != self.multiplicities.len() {
            return Err(Error::LengthMismatch {
                expected: self.multiplicities.len(),
                actual: new_outcomes.len(),
            });
        }
        let mut out = self.clone();
        for leaf in &mut out.leaves {
            leaf.value = leaf.weights.dot(new_outcomes);
        }
        Ok(out)
    }
}

impl Smoother for TreeModel {
    fn train_size(&self) -> usize {
        self.multiplicities.len()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        TreeModel::predict(self, x)
    }

    fn weights(&self, x: &[f64]) -> SmootherWeights {
        self.tree_weights(x)
    }
}

/// Fit a tree on `data`, optionally weighting rows by `sample_multiplicity`.
pub fn fit_tree(data: &Dataset, config: &TreeConfig, sample_multiplicity: Option<&[f64]>) -> Result<TreeModel> {
    fit_with_structure_outcomes(data, config, sample_multiplicity, data.outcomes())
}

/// Grow the structure on a seeded permutation of the outcomes, then fill the
/// leaves from the true outcomes.
pub fn fit_totally_randomized_tree(data: &Dataset, config: &TreeConfig) -> Result<TreeModel> {
    fit_totally_randomized_weighted(data, config, None)
}

pub(crate) fn fit_totally_randomized_weighted(
    data: &Dataset,
    config: &TreeConfig,
    sample_multiplicity: Option<&[f64]>,
) -> Result<TreeModel> {
    let mut perm: Vec<usize> = (0..data.sample_count()).collect();
    perm.shuffle(&mut rng_from_seed(derive_seed(config.seed, 0x5eed_5eed)));
    fit_on_permuted_outcomes(data, config, sample_multiplicity, &perm)
}

/// Grow the structure on outcomes `y[perm[i]]` and fill the leaves from the
/// true outcomes.
pub fn fit_on_permuted_outcomes(
    data: &Dataset,
    config: &TreeConfig,
    sample_multiplicity: Option<&[f64]>,
    perm: &[usize],
) -> Result<TreeModel> {
    let n = data.sample_count();
    if perm.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid("permutation must contain each row index exactly once"));
        }
    }
    let y = data.outcomes();
    let shuffled: Vec<f64> = perm.iter().map(|&p| y[p]).collect();
    fit_with_structure_outcomes(data, config, sample_multiplicity, &shuffled)?.refit_leaves(y)
}

fn fit_with_structure_outcomes(
    data: &Dataset,
    config: &TreeConfig,
    sample_multiplicity: Option<&[f64]>,
    structure_outcomes: &[f64],
) -> Result<TreeModel> {
    config.validate()?;
    let n = data.sample_count();
    let multiplicities = match sample_multiplicity {
        Some(c) => {
            if c.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: c.len(),
                });
            }
            if c.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::invalid("multiplicities must be finite and nonnegative"));
            }
            c.to_vec()
        }
        None => vec![1.0; n],
    };
    let rows: Vec<usize> = (0..n).filter(|&i| multiplicities[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }

    let grower = Grower {
        data,
        y: structure_outcomes,
        c: &multiplicities,
        config,
        p_try: config.features_per_split(data.feature_count()),
    };
    let (nodes, leaf_rows) = grower.grow(rows);

    let mut depth = 0;
    let leaves = leaf_rows
        .into_iter()
        .map(|(rows, d)| {
            depth = depth.max(d);
            let members = rows.into_iter().map(|i| (i, multiplicities[i])).collect();
            Leaf::new(members, structure_outcomes, n, d)
        })
        .collect();
    Ok(TreeModel {
        nodes,
        leaves,
        depth,
        multiplicities,
        feature_count: data.feature_count(),
    })
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    seed: u64,
    split: SplitChoice,
}

struct Frontier {
    decrease: f64,
    order: usize,
    pending: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    // Max-heap: largest decrease first, then the earliest created node.
    fn cmp(&self, other: &Self) -> Ordering {
        self.decrease
            .total_cmp(&other.decrease)
            .then_with(|| other.order.cmp(&self.order))
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    y: &'a [f64],
    c: &'a [f64],
    config: &'a TreeConfig,
    p_try: usize,
}

impl Grower<'_> {
    /// Returns the node array and, indexed by leaf id, each leaf's sorted
    /// rows and depth.
    fn grow(&self, root_rows: Vec<usize>) -> (Vec<Node>, Vec<(Vec<usize>, usize)>) {
        let mut nodes = vec![Node::Leaf(LeafId(usize::MAX))];
        let mut leaves: Vec<(Vec<usize>, usize)> = Vec::new();
        let mut pending: Vec<Option<Pending>> = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut leaf_budget_used = 1usize;

        let root_seed = derive_seed(self.config.seed, 0x7265_6520);
        self.enqueue(0, root_rows, 0, root_seed, &mut nodes, &mut leaves, &mut pending, &mut heap);

        while let Some(top) = heap.pop() {
            let p = pending[top.pending].take().expect("frontier entry expanded twice");
            if self.config.max_leaves.is_some_and(|max| leaf_budget_used >= max) {
                self.finish_leaf(p.node, p.rows, p.depth, &mut nodes, &mut leaves);
                continue;
            }
            leaf_budget_used += 1;
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = p
                .rows
                .iter()
                .partition(|&&i| self.data.value(i, p.split.feature) <= p.split.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf(LeafId(usize::MAX)));
            let right = nodes.len();
            nodes.push(Node::Leaf(LeafId(usize::MAX)));
            nodes[p.node] = Node::Split {
                feature: p.split.feature,
                threshold: p.split.threshold,
                left,
                right,
            };
            let d = p.depth + 1;
            self.enqueue(left, left_rows, d, derive_seed(p.seed, 1), &mut nodes, &mut leaves, &mut pending, &mut heap);
            self.enqueue(right, right_rows, d, derive_seed(p.seed, 2), &mut nodes, &mut leaves, &mut pending, &mut heap);
        }
        (nodes, leaves)
    }

    #[allow(clippy::too_many_arguments)]
    fn enqueue(
        &self,
        node: usize,
        rows: Vec<usize>,
        depth: usize,
        seed: u64,
        nodes: &mut [Node],
        leaves: &mut Vec<(Vec<usize>, usize)>,
        pending: &mut Vec<Option<Pending>>,
        heap: &mut BinaryHeap<Frontier>,
    ) {
        match self.best_split(&rows, depth, seed) {
            Some(split) => {
                heap.push(Frontier {
                    decrease: split.decrease,
                    order: pending.len(),
                    pending: pending.len(),
                });
                pending.push(Some(Pending {
                    node,
                    rows,
                    depth,
                    seed,
                    split,
                }));
            }
            None => self.finish_leaf(node, rows, depth, nodes, leaves),
        }
    }

    fn finish_leaf(&self, node: usize, mut rows: Vec<usize>, depth: usize, nodes: &mut [Node], leaves: &mut Vec<(Vec<usize>, usize)>) {
        rows.sort_unstable();
        nodes[node] = Node::Leaf(LeafId(leaves.len()));
        leaves.push((rows, depth));
    }

    fn best_split(&self, rows: &[usize], depth: usize, seed: u64) -> Option<SplitChoice> {
        if rows.len() < self.config.min_samples_split {
            return None;
        }
        if self.config.max_depth.is_some_and(|max| depth >= max) {
            return None;
        }
        let y0 = self.y[rows[0]];
        if rows.iter().all(|&i| self.y[i] == y0) {
            return None;
        }

        let mut order: Vec<usize> = (0..self.data.feature_count()).collect();
        order.shuffle(&mut rng_from_seed(seed));

        let mut best: Option<SplitChoice> = None;
        let mut column: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
        for &feature in &order[..self.p_try] {
            column.clear();
            column.extend(rows.iter().map(|&i| (self.data.value(i, feature), self.c[i], self.y[i])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(candidate) = best_threshold(&column, feature) {
                if best.is_none_or(|b| candidate.decrease > b.decrease) {
                    best = Some(candidate);
                }
            }
        }
        best
    }
}

/// Best threshold on one feature; `column` is `(value, multiplicity, y)`
/// sorted by value. Ties keep the lowest threshold.
fn best_threshold(column: &[(f64, f64, f64)], feature: usize) -> Option<SplitChoice> {
    let total_w: f64 = column.iter().map(|r| r.1).sum();
    let total_s: f64 = column.iter().map(|r| r.1 * r.2).sum();
    let mut w_left = 0.0;
    let mut s_left = 0.0;
    let mut best: Option<SplitChoice> = None;
    for k in 0..column.len() - 1 {
        let (v, c, y) = column[k];
        w_left += c;
        s_left += c * y;
        let next = column[k + 1].0;
        if v == next {
            continue;
        }
        let w_right = total_w - w_left;
        let mean_left = s_left / w_left;
        let mean_right = (total_s - s_left) / w_right;
        let gap = mean_left - mean_right;
        let decrease = w_left * w_right / total_w * gap * gap;
        if best.is_none_or(|b| decrease > b.decrease) {
            let mid = v + (next - v) / 2.0;
            let threshold = if mid < next { mid } else { v };
            best = Some(SplitChoice {
                feature,
                threshold,
                decrease,
            });
        }
    }
    best
}
