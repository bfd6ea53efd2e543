//! Pruning algorithms: minimum cost-complexity pruning with its full
//! breakpoint path, the pessimistic (c1, c2) test, and reduced-error
//! pruning against a holdout set.
//!
//! Weakest-link selection compares critical values as exact integer
//! fractions (misclassification-count difference over `n * (leaves - 1)`),
//! so simultaneous links collapse together and breakpoints increase
//! strictly without any floating-point tie tolerance.

use crate::data::{Dataset, Task};
use crate::tree::{Child, DecisionTree, TreeError};
use serde::Serialize;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("cost-complexity pruning needs classification leaf statistics")]
    NoLeafStatistics,
    #[error("complexity parameter must be a nonnegative real, got {0}")]
    BadAlpha(f64),
    #[error("pessimistic parameters must be nonnegative, got c1={0}, c2={1}")]
    BadPessimistic(f64, f64),
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("holdout incompatible with tree: {0}")]
    HoldoutMismatch(String),
    #[error("tree error: {0}")]
    Tree(#[from] TreeError),
}

/// One piece of the cost-complexity path: `tree` is the minimizer of
/// `training loss + alpha * leaves` for every alpha in `[alpha, next)`.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub alpha: f64,
    pub tree: DecisionTree,
    pub train_loss: f64,
    pub n_leaves: usize,
    /// Breakpoint as the exact fraction `num / (n * den)`.
    frac: (u64, u64),
}

impl PathEntry {
    pub fn breakpoint_fraction(&self) -> (u64, u64) {
        self.frac
    }
}

/// The full weakest-link pruning path: strictly increasing breakpoints with
/// the nested sequence of optimal subtrees.
#[derive(Debug, Clone)]
pub struct PruningPath {
    entries: Vec<PathEntry>,
    n: u64,
}

#[derive(Serialize)]
struct PathEntryWire<'a> {
    alpha: f64,
    leaves: usize,
    train_loss: f64,
    tree: &'a DecisionTree,
}

impl PruningPath {
    pub fn entries(&self) -> &[PathEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Training set size behind the loss normalization.
    pub fn n_examples(&self) -> u64 {
        self.n
    }

    /// Index of the piece containing `alpha` (half-open intervals, last
    /// unbounded).
    pub fn piece_index(&self, alpha: f64) -> Result<usize, PruneError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(PruneError::BadAlpha(alpha));
        }
        Ok(self.entries.partition_point(|e| e.alpha <= alpha) - 1)
    }

    /// A representative parameter value inside piece `k`: the interval
    /// midpoint, or `2 * alpha_last + 1` for the unbounded piece.
    pub fn representative_alpha(&self, k: usize) -> f64 {
        if k + 1 < self.entries.len() {
            (self.entries[k].alpha + self.entries[k + 1].alpha) / 2.0
        } else {
            2.0 * self.entries[k].alpha + 1.0
        }
    }

    pub fn to_json(&self) -> String {
        let wire: Vec<PathEntryWire> = self
            .entries
            .iter()
            .map(|e| PathEntryWire {
                alpha: e.alpha,
                leaves: e.n_leaves,
                train_loss: e.train_loss,
                tree: &e.tree,
            })
            .collect();
        serde_json::to_string(&wire).expect("path serializes")
    }
}

/// Internal-node bookkeeping shared by the pruning passes.
struct NodeStats {
    /// Aggregated class counts of the subtree below each internal node.
    counts: Vec<Vec<u64>>,
    /// Examples reaching each internal node.
    n_below: Vec<u64>,
    /// Misclassified examples if the node were a majority leaf.
    miss_leaf: Vec<u64>,
}

fn node_stats(t: &DecisionTree) -> Result<NodeStats, PruneError> {
    if t.task() != Task::Classification {
        return Err(PruneError::NoLeafStatistics);
    }
    let mut counts = Vec::with_capacity(t.n_internal());
    let mut n_below = Vec::with_capacity(t.n_internal());
    let mut miss_leaf = Vec::with_capacity(t.n_internal());
    for i in 0..t.n_internal() {
        let c = t.subtree_counts(Child::Node(i));
        let total: u64 = c.iter().sum();
        let max = c.iter().copied().max().unwrap_or(0);
        counts.push(c);
        n_below.push(total);
        miss_leaf.push(total - max);
    }
    Ok(NodeStats { counts, n_below, miss_leaf })
}

/// Current misclassification count and leaf count of each live internal
/// node's subtree, honoring the collapse set.
fn current_subtree(
    t: &DecisionTree,
    collapsed: &HashSet<usize>,
    stats: &NodeStats,
    c: Child,
) -> (u64, usize) {
    match c {
        Child::Leaf(i) => (t.leaves()[i].misclassified(), 1),
        Child::Node(i) if collapsed.contains(&i) => (stats.miss_leaf[i], 1),
        Child::Node(i) => {
            let (ml, ll) = current_subtree(t, collapsed, stats, t.nodes()[i].left);
            let (mr, lr) = current_subtree(t, collapsed, stats, t.nodes()[i].right);
            (ml + mr, ll + lr)
        }
    }
}

fn live_internal(t: &DecisionTree, collapsed: &HashSet<usize>, c: Child, out: &mut Vec<usize>) {
    if let Child::Node(i) = c {
        if !collapsed.contains(&i) {
            out.push(i);
            live_internal(t, collapsed, t.nodes()[i].left, out);
            live_internal(t, collapsed, t.nodes()[i].right, out);
        }
    }
}

fn frac_cmp(a: (u64, u64), b: (u64, u64)) -> std::cmp::Ordering {
    (a.0 as u128 * b.1 as u128).cmp(&(b.0 as u128 * a.1 as u128))
}

/// Minimum cost-complexity pruning: the exact sequence of breakpoints
/// `0 = a_0 < a_1 < ...` with the nested subtrees optimal on each interval.
///
/// At each step every internal node's critical value
/// `(miss-if-leaf - miss-of-subtree) / (n * (leaves - 1))` is compared
/// exactly; all minimizers collapse at once. When the minimum is zero (the
/// tree has splits that do not reduce training error) the zero-gain links
/// are folded into the alpha = 0 entry, since the input tree minimizes the
/// cost-complexity objective only at alpha = 0 itself in that case.
pub fn mccp_path(t: &DecisionTree) -> Result<PruningPath, PruneError> {
    let stats = node_stats(t)?;
    let n: u64 = t.leaves().iter().map(|l| l.weight() as u64).sum();
    if n == 0 {
        return Err(PruneError::NoLeafStatistics);
    }
    let mut collapsed: HashSet<usize> = HashSet::new();
    let train_loss = |tree: &DecisionTree| -> f64 {
        tree.leaves().iter().map(|l| l.misclassified()).sum::<u64>() as f64 / n as f64
    };
    let mut entries = vec![PathEntry {
        alpha: 0.0,
        train_loss: train_loss(t),
        n_leaves: t.n_leaves(),
        tree: t.clone(),
        frac: (0, 1),
    }];

    loop {
        let mut live = Vec::new();
        live_internal(t, &collapsed, t.root(), &mut live);
        if live.is_empty() {
            break;
        }
        let mut min_frac: Option<(u64, u64)> = None;
        let mut g = Vec::with_capacity(live.len());
        for &h in &live {
            let (miss_sub, leaves_sub) = current_subtree(t, &collapsed, &stats, Child::Node(h));
            debug_assert!(leaves_sub >= 2);
            debug_assert!(stats.miss_leaf[h] >= miss_sub);
            let frac = (stats.miss_leaf[h] - miss_sub, (leaves_sub - 1) as u64);
            if min_frac.is_none_or(|m| frac_cmp(frac, m).is_lt()) {
                min_frac = Some(frac);
            }
            g.push((h, frac));
        }
        let min_frac = min_frac.unwrap();
        for (h, frac) in g {
            if frac_cmp(frac, min_frac).is_eq() {
                collapsed.insert(h);
            }
        }
        let tree = t.collapse(&collapsed);
        let entry = PathEntry {
            alpha: min_frac.0 as f64 / (n as f64 * min_frac.1 as f64),
            train_loss: train_loss(&tree),
            n_leaves: tree.n_leaves(),
            tree,
            frac: min_frac,
        };
        let last = entries.last().unwrap();
        match frac_cmp(entry.frac, last.frac) {
            std::cmp::Ordering::Equal => {
                *entries.last_mut().unwrap() = entry;
            }
            std::cmp::Ordering::Greater => entries.push(entry),
            std::cmp::Ordering::Less => {
                unreachable!("weakest-link critical values decreased")
            }
        }
    }
    Ok(PruningPath { entries, n })
}

/// The path tree optimal at `alpha`; at a breakpoint exactly, the smaller
/// tree (half-open interval convention).
pub fn prune_at(path: &PruningPath, alpha: f64) -> Result<&DecisionTree, PruneError> {
    Ok(&path.entries[path.piece_index(alpha)?].tree)
}

/// Parameters of the pessimistic pruning test
/// `e_leaf <= e_subtree + c1 * sqrt((t_h * ln(a) + c2) / n_h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PessimisticParams {
    pub c1: f64,
    pub c2: f64,
}

impl PessimisticParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self, PruneError> {
        if !c1.is_finite() || !c2.is_finite() || c1 < 0.0 || c2 < 0.0 {
            return Err(PruneError::BadPessimistic(c1, c2));
        }
        Ok(Self { c1, c2 })
    }
}

/// Single bottom-up pass replacing a subtree by its majority leaf whenever
/// the leaf's training error is within the (c1, c2) slack of the (already
/// pruned) subtree's error. `n_attributes` enters through `ln a`; values
/// below 2 are clamped so the radicand stays nonnegative.
pub fn pessimistic_prune(
    t: &DecisionTree,
    params: &PessimisticParams,
    n_attributes: usize,
) -> Result<DecisionTree, PruneError> {
    PessimisticParams::new(params.c1, params.c2)?;
    let stats = node_stats(t)?;
    let log_a = (n_attributes.max(2) as f64).ln();
    let mut collapsed = HashSet::new();

    // Returns (misclassified, internal nodes) of the pruned subtree at `c`.
    fn walk(
        t: &DecisionTree,
        stats: &NodeStats,
        params: &PessimisticParams,
        log_a: f64,
        collapsed: &mut HashSet<usize>,
        c: Child,
    ) -> (u64, usize) {
        match c {
            Child::Leaf(i) => (t.leaves()[i].misclassified(), 0),
            Child::Node(h) => {
                let (ml, il) = walk(t, stats, params, log_a, collapsed, t.nodes()[h].left);
                let (mr, ir) = walk(t, stats, params, log_a, collapsed, t.nodes()[h].right);
                let miss_sub = ml + mr;
                let t_h = il + ir + 1;
                let n_h = stats.n_below[h];
                assert!(n_h > 0, "internal node with no training examples");
                let e_h = miss_sub as f64 / n_h as f64;
                let e_l = stats.miss_leaf[h] as f64 / n_h as f64;
                let slack = params.c1 * ((t_h as f64 * log_a + params.c2) / n_h as f64).sqrt();
                if e_l <= e_h + slack {
                    collapsed.insert(h);
                    (stats.miss_leaf[h], 0)
                } else {
                    (miss_sub, t_h)
                }
            }
        }
    }
    walk(t, &stats, params, log_a, &mut collapsed, t.root());
    Ok(t.collapse(&collapsed))
}

/// Reduced-error pruning: bottom-up, replace an internal node by its
/// (training-)majority leaf whenever that does not increase the holdout
/// error; one post-order pass with running error counts reaches the fixed
/// point.
pub fn reduced_error_prune(t: &DecisionTree, holdout: &Dataset) -> Result<DecisionTree, PruneError> {
    if holdout.task() != Task::Classification {
        return Err(PruneError::HoldoutMismatch("holdout must be classification data".into()));
    }
    if holdout.n() == 0 {
        return Err(PruneError::EmptyHoldout);
    }
    if holdout.n_attributes() != t.n_features() || holdout.n_classes() != t.n_classes() {
        return Err(PruneError::HoldoutMismatch(format!(
            "holdout is {}x{} with {} classes, tree expects {} features and {} classes",
            holdout.n(),
            holdout.n_attributes(),
            holdout.n_classes(),
            t.n_features(),
            t.n_classes()
        )));
    }
    let stats = node_stats(t)?;
    let labels = holdout.class_labels().unwrap();
    let mut collapsed = HashSet::new();

    fn walk(
        t: &DecisionTree,
        holdout: &Dataset,
        labels: &[usize],
        stats: &NodeStats,
        collapsed: &mut HashSet<usize>,
        c: Child,
        rows: Vec<usize>,
    ) -> usize {
        match c {
            Child::Leaf(i) => {
                let label = t.leaves()[i].class_label().unwrap();
                rows.iter().filter(|&&r| labels[r] != label).count()
            }
            Child::Node(h) => {
                let node = &t.nodes()[h];
                let (lrows, rrows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| node.function.routes_left(holdout.row(r)));
                let el = walk(t, holdout, labels, stats, collapsed, node.left, lrows);
                let er = walk(t, holdout, labels, stats, collapsed, node.right, rrows);
                let subtree_err = el + er;
                let majority = crate::tree::argmax_label(&stats.counts[h]);
                let leaf_err = rows.iter().filter(|&&r| labels[r] != majority).count();
                if leaf_err <= subtree_err {
                    collapsed.insert(h);
                    leaf_err
                } else {
                    subtree_err
                }
            }
        }
    }
    let all: Vec<usize> = (0..holdout.n()).collect();
    walk(t, holdout, labels, &stats, &mut collapsed, t.root(), all);
    Ok(t.collapse(&collapsed))
}

/// True when `sub` can be obtained from `full` by replacing internal nodes
/// with leaves (same functions on the surviving structure).
pub fn is_pruned_subtree(sub: &DecisionTree, full: &DecisionTree) -> bool {
    fn rec(sub: &DecisionTree, full: &DecisionTree, cs: Child, cf: Child) -> bool {
        match (cs, cf) {
            (Child::Leaf(_), _) => true,
            (Child::Node(_), Child::Leaf(_)) => false,
            (Child::Node(i), Child::Node(j)) => {
                let (a, b) = (&sub.nodes()[i], &full.nodes()[j]);
                a.function == b.function
                    && rec(sub, full, a.left, b.left)
                    && rec(sub, full, a.right, b.right)
            }
        }
    }
    rec(sub, full, sub.root(), full.root())
}
