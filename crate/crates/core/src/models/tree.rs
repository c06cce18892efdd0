//! CART classification tree.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of a
//! feature; a row goes left when its value is `<=` the threshold. The `best`
//! splitter scans every candidate feature, the `random` splitter scans one
//! feature drawn uniformly (among those not constant at the node). Among
//! equally good splits the lowest feature index, then the lowest threshold,
//! wins. A split is only accepted if it strictly lowers the weighted impurity.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamMap, ParamReader};
use super::ModelError;
use crate::matrix::FeatureMatrix;
use crate::rng::{stream, StreamRng};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitter {
    Best,
    Random,
}

/// Features examined per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    /// `ceil(sqrt(n))`, `ceil(log2(n))` or `n`, clamped to `1..=n`.
    pub fn count(self, n: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (n as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => (n as f64).log2().ceil() as usize,
            MaxFeatures::All => n,
        };
        m.clamp(1, n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub splitter: Splitter,
    /// `None` grows until another stopping rule applies.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub ccp_alpha: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            splitter: Splitter::Best,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            ccp_alpha: 0.0,
        }
    }
}

impl TreeParams {
    pub fn from_params(params: &ParamMap) -> Result<Self, ModelError> {
        let mut r = ParamReader::new("dtree", params);
        let p = Self::read(&mut r, MaxFeatures::All, true)?;
        r.finish()?;
        Ok(p)
    }

    pub(crate) fn read(r: &mut ParamReader<'_>, default_features: MaxFeatures, with_splitter: bool) -> Result<Self, ModelError> {
        let criterion = match r.choice(&["criterion"], "gini", &["gini", "entropy"])? {
            "entropy" => Criterion::Entropy,
            _ => Criterion::Gini,
        };
        let splitter = if with_splitter {
            match r.choice(&["splitter"], "best", &["best", "random"])? {
                "random" => Splitter::Random,
                _ => Splitter::Best,
            }
        } else {
            Splitter::Best
        };
        let default_mf = match default_features {
            MaxFeatures::Sqrt => "sqrt",
            MaxFeatures::Log2 => "log2",
            MaxFeatures::All => "all",
        };
        let max_features = match r.choice(&["max_features"], default_mf, &["sqrt", "log2", "all"])? {
            "sqrt" => MaxFeatures::Sqrt,
            "log2" => MaxFeatures::Log2,
            _ => MaxFeatures::All,
        };
        Ok(Self {
            criterion,
            splitter,
            max_depth: r.optional_usize(&["max_depth"], None)?,
            min_samples_split: r.usize_at_least(&["min_samples_split"], 2, 2)?,
            min_samples_leaf: r.usize_at_least(&["min_samples_leaf"], 1, 1)?,
            max_features,
            ccp_alpha: r.float(&["ccp_alpha"], 0.0, |a| a >= 0.0, "must be >= 0")?,
        })
    }
}

/// Gini `1 - sum p^2` or entropy `-sum p log2 p` of a class-count pair.
pub fn impurity<T: Scalar>(criterion: Criterion, counts: [usize; 2]) -> T {
    let n = counts[0] + counts[1];
    if n == 0 {
        return T::zero();
    }
    let total = T::of_usize(n);
    let p = counts.map(|c| T::of_usize(c) / total);
    match criterion {
        Criterion::Gini => T::one() - (p[0] * p[0] + p[1] * p[1]),
        Criterion::Entropy => p.iter().filter(|&&q| q > T::zero()).fold(T::zero(), |acc, &q| acc - q * q.log2()),
    }
}

/// Size-weighted impurity of the two children of a split.
pub fn split_cost<T: Scalar>(criterion: Criterion, left: [usize; 2], right: [usize; 2]) -> T {
    let nl = left[0] + left[1];
    let nr = right[0] + right[1];
    (T::of_usize(nl) * impurity::<T>(criterion, left) + T::of_usize(nr) * impurity::<T>(criterion, right))
        / T::of_usize(nl + nr)
}

/// Required impurity decrease for a split to count as an improvement;
/// filters out rounding noise on splits that change nothing.
pub fn min_decrease<T: Scalar>() -> T {
    T::epsilon() * T::of(64.0)
}

/// Threshold strictly separating `a < b`: their midpoint, or `a` when the
/// midpoint rounds up to `b`.
pub fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let mid = (a + b) / T::of(2.0);
    if mid < b && mid >= a {
        mid
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode<T> {
    Leaf {
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: T,
        counts: [usize; 2],
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
}

impl<T: Scalar> TreeNode<T> {
    pub fn counts(&self) -> [usize; 2] {
        match self {
            TreeNode::Leaf { counts } | TreeNode::Split { counts, .. } => *counts,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn leaf_for(&self, row: &[T]) -> [usize; 2] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { counts } => return *counts,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Visit every split node, parents before children.
    pub fn for_each_split(&self, f: &mut impl FnMut(&TreeNode<T>)) {
        if let TreeNode::Split { left, right, .. } = self {
            f(self);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    pub root: TreeNode<T>,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice<T> {
    pub feature: usize,
    pub threshold: T,
    pub cost: T,
}

struct Grower<'a, T> {
    x: &'a FeatureMatrix<T>,
    y: &'a [u8],
    params: &'a TreeParams,
    n_candidates: usize,
    rng: &'a mut StreamRng,
}

fn class_counts(y: &[u8], idx: &[usize]) -> [usize; 2] {
    let ones = idx.iter().filter(|&&i| y[i] == 1).count();
    [idx.len() - ones, ones]
}

/// Best legal split of `idx` on one feature, or `None` if the feature is
/// constant or no split leaves `min_leaf` rows on both sides.
pub fn best_split_on_feature<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[u8],
    idx: &[usize],
    feature: usize,
    criterion: Criterion,
    min_leaf: usize,
) -> Option<SplitChoice<T>> {
    let mut sorted: Vec<(T, u8)> = idx.iter().map(|&i| (x.get(i, feature), y[i])).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = class_counts(y, idx);
    let n = sorted.len();
    let mut left = [0usize; 2];
    let mut best: Option<SplitChoice<T>> = None;
    for k in 0..n.saturating_sub(1) {
        left[sorted[k].1 as usize] += 1;
        if sorted[k].0 == sorted[k + 1].0 {
            continue;
        }
        let n_left = k + 1;
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let cost = split_cost::<T>(criterion, left, right);
        if best.is_none_or(|b| cost < b.cost) {
            best = Some(SplitChoice { feature, threshold: midpoint(sorted[k].0, sorted[k + 1].0), cost });
        }
    }
    best
}

impl<T: Scalar> Grower<'_, T> {
    fn candidate_features(&mut self, idx: &[usize]) -> Vec<usize> {
        let n_features = self.x.n_cols();
        let mut features: Vec<usize> = if self.n_candidates < n_features {
            let mut f = sample(self.rng, n_features, self.n_candidates).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..n_features).collect()
        };
        if self.params.splitter == Splitter::Random {
            features.retain(|&f| {
                let first = self.x.get(idx[0], f);
                idx.iter().any(|&i| self.x.get(i, f) != first)
            });
            if features.is_empty() {
                return features;
            }
            let pick = features[self.rng.gen_range(0..features.len())];
            features = vec![pick];
        }
        features
    }

    fn find_split(&mut self, idx: &[usize], parent_impurity: T) -> Option<SplitChoice<T>> {
        let mut best: Option<SplitChoice<T>> = None;
        for f in self.candidate_features(idx) {
            let Some(s) = best_split_on_feature(self.x, self.y, idx, f, self.params.criterion, self.params.min_samples_leaf)
            else {
                continue;
            };
            if best.is_none_or(|b| s.cost < b.cost) {
                best = Some(s);
            }
        }
        best.filter(|b| b.cost < parent_impurity - min_decrease::<T>())
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> TreeNode<T> {
        let counts = class_counts(self.y, &idx);
        let n = idx.len();
        let node_impurity = impurity::<T>(self.params.criterion, counts);
        let p = self.params;
        if p.max_depth.is_some_and(|d| depth >= d)
            || n < p.min_samples_split
            || n < 2 * p.min_samples_leaf
            || node_impurity <= T::zero()
        {
            return TreeNode::Leaf { counts };
        }
        let Some(split) = self.find_split(&idx, node_impurity) else {
            return TreeNode::Leaf { counts };
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x.get(i, split.feature) <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            counts,
            left: Box::new(self.grow(l, depth + 1)),
            right: Box::new(self.grow(r, depth + 1)),
        }
    }
}

/// Grow a tree on the row multiset `idx` (duplicates allowed for bootstrap).
pub(crate) fn grow_tree<T: Scalar>(
    params: &TreeParams,
    rng: &mut StreamRng,
    x: &FeatureMatrix<T>,
    y: &[u8],
    idx: Vec<usize>,
) -> DecisionTree<T> {
    let mut grower = Grower { x, y, params, n_candidates: params.max_features.count(x.n_cols()), rng };
    let mut root = grower.grow(idx, 0);
    if params.ccp_alpha > 0.0 {
        prune(&mut root, T::of(params.ccp_alpha), params.criterion);
    }
    DecisionTree { root, n_features: x.n_cols() }
}

/// `(R(leaves of subtree), leaf count)` where `R(t) = n_t / N * impurity(t)`.
fn subtree_risk<T: Scalar>(node: &TreeNode<T>, criterion: Criterion, n_total: T) -> (T, usize) {
    match node {
        TreeNode::Leaf { counts } => (node_risk(*counts, criterion, n_total), 1),
        TreeNode::Split { left, right, .. } => {
            let (rl, ll) = subtree_risk(left, criterion, n_total);
            let (rr, lr) = subtree_risk(right, criterion, n_total);
            (rl + rr, ll + lr)
        }
    }
}

fn node_risk<T: Scalar>(counts: [usize; 2], criterion: Criterion, n_total: T) -> T {
    T::of_usize(counts[0] + counts[1]) / n_total * impurity::<T>(criterion, counts)
}

/// Weakest link: the split node with the smallest effective alpha
/// `(R(t) - R(T_t)) / (|leaves(T_t)| - 1)`, first in pre-order on ties.
fn weakest_link<T: Scalar>(
    node: &TreeNode<T>,
    criterion: Criterion,
    n_total: T,
    path: &mut Vec<bool>,
    best: &mut Option<(T, Vec<bool>)>,
) {
    if let TreeNode::Split { left, right, counts, .. } = node {
        let (r_sub, leaves) = subtree_risk(node, criterion, n_total);
        let g = (node_risk(*counts, criterion, n_total) - r_sub) / T::of_usize(leaves - 1);
        if best.as_ref().is_none_or(|(bg, _)| g < *bg) {
            *best = Some((g, path.clone()));
        }
        path.push(false);
        weakest_link(left, criterion, n_total, path, best);
        path.pop();
        path.push(true);
        weakest_link(right, criterion, n_total, path, best);
        path.pop();
    }
}

/// Minimal cost-complexity pruning: collapse weakest links while their
/// effective alpha is `<= alpha`.
pub fn prune<T: Scalar>(root: &mut TreeNode<T>, alpha: T, criterion: Criterion) {
    let n_total = T::of_usize(root.counts()[0] + root.counts()[1]);
    loop {
        let mut best = None;
        weakest_link(root, criterion, n_total, &mut Vec::new(), &mut best);
        let Some((g, path)) = best else { return };
        if g > alpha {
            return;
        }
        let mut node = &mut *root;
        for go_right in path {
            node = match node {
                TreeNode::Split { left, right, .. } => {
                    if go_right {
                        right
                    } else {
                        left
                    }
                }
                TreeNode::Leaf { .. } => unreachable!("path leads through split nodes"),
            };
        }
        *node = TreeNode::Leaf { counts: node.counts() };
    }
}

impl<T: Scalar> DecisionTree<T> {
    pub fn fit(params: &TreeParams, seed: u64, x: &FeatureMatrix<T>, y: &[u8]) -> Result<Self, ModelError> {
        let mut rng = stream(seed, &[0]);
        Ok(grow_tree(params, &mut rng, x, y, (0..x.n_rows()).collect()))
    }

    /// Class-1 fraction at the leaf reached by `row`.
    pub fn score_row(&self, row: &[T]) -> T {
        let c = self.root.leaf_for(row);
        T::of_usize(c[1]) / T::of_usize(c[0] + c[1])
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}
