//! From-scratch multi-target CART regression trees.
//!
//! Greedy exact splits: at each node the (feature, threshold) pair minimizing
//! the summed within-child squared error over all targets, with thresholds at
//! midpoints between consecutive sorted unique feature values. Trees grow
//! level by level over feature orderings presorted once per dataset, so a
//! forest of trees on one augmented set shares the sort work; bootstrap
//! resamples enter as integer row weights.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Stream;

/// Split/stop configuration for a single tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Maximum number of edges on any root-to-leaf path; 0 means a single leaf.
    pub max_depth: usize,
    /// Minimum (weighted) sample count in each child.
    pub min_samples_leaf: usize,
    /// Features considered per node; `None` uses all features.
    pub feature_subsample: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 7,
            min_samples_leaf: 1,
            feature_subsample: None,
        }
    }
}

const LEAF: u32 = u32::MAX;
const DEAD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct TreeNode {
    /// Split feature, or `LEAF`; leaves store the leaf slot in `left`.
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
}

/// A fitted multi-target regression tree: piecewise-constant prediction with
/// d-dimensional leaf means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeEncoding", try_from = "TreeEncoding")]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
    /// n_leaves x n_targets leaf means, flattened.
    leaf_values: Vec<f64>,
    n_features: usize,
    n_targets: usize,
}

/// Flat-array wire form of a tree (`split_feature = -1` marks a leaf whose
/// `left` entry indexes its row in `leaf_values`).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TreeEncoding {
    n_features: usize,
    n_targets: usize,
    split_feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    leaf_values: Vec<f64>,
}

impl From<RegressionTree> for TreeEncoding {
    fn from(t: RegressionTree) -> Self {
        TreeEncoding {
            n_features: t.n_features,
            n_targets: t.n_targets,
            split_feature: t
                .nodes
                .iter()
                .map(|n| if n.feature == LEAF { -1 } else { n.feature as i64 })
                .collect(),
            threshold: t.nodes.iter().map(|n| n.threshold).collect(),
            left: t.nodes.iter().map(|n| n.left).collect(),
            right: t.nodes.iter().map(|n| n.right).collect(),
            leaf_values: t.leaf_values,
        }
    }
}

impl TryFrom<TreeEncoding> for RegressionTree {
    type Error = Error;

    fn try_from(e: TreeEncoding) -> Result<Self> {
        let n = e.split_feature.len();
        if e.threshold.len() != n || e.left.len() != n || e.right.len() != n {
            return Err(Error::invalid("tree arrays disagree in length"));
        }
        if e.n_targets == 0 || e.leaf_values.len() % e.n_targets != 0 {
            return Err(Error::invalid("leaf value array not a multiple of n_targets"));
        }
        let n_leaves = e.leaf_values.len() / e.n_targets;
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let feature = match e.split_feature[i] {
                -1 => LEAF,
                f if f >= 0 && (f as usize) < e.n_features => f as u32,
                _ => return Err(Error::invalid("split feature out of range")),
            };
            if feature == LEAF {
                if e.left[i] as usize >= n_leaves {
                    return Err(Error::invalid("leaf slot out of range"));
                }
            } else if e.left[i] as usize >= n || e.right[i] as usize >= n {
                return Err(Error::invalid("child index out of range"));
            }
            nodes.push(TreeNode {
                feature,
                threshold: e.threshold[i],
                left: e.left[i],
                right: e.right[i],
            });
        }
        Ok(RegressionTree {
            nodes,
            leaf_values: e.leaf_values,
            n_features: e.n_features,
            n_targets: e.n_targets,
        })
    }
}

impl RegressionTree {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_values.len() / self.n_targets
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: u32) -> usize {
            let n = nodes[i as usize];
            if n.feature == LEAF {
                0
            } else {
                1 + walk(nodes, n.left).max(walk(nodes, n.right))
            }
        }
        walk(&self.nodes, 0)
    }

    #[inline]
    pub fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_features);
        let mut i = 0u32;
        loop {
            let node = self.nodes[i as usize];
            if node.feature == LEAF {
                let base = node.left as usize * self.n_targets;
                out.copy_from_slice(&self.leaf_values[base..base + self.n_targets]);
                return;
            }
            i = if x[node.feature as usize] <= node.threshold {
                node.left
            } else {
                node.right
            };
        }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.n_targets];
        self.predict_into(x, &mut out);
        out
    }

    /// Training sum of squared errors of this tree on `(x, y)`.
    pub fn training_sse(&self, x: &Matrix, y: &Matrix) -> f64 {
        let mut out = alloc::vec![0.0; self.n_targets];
        let mut sse = 0.0;
        for i in 0..x.rows() {
            self.predict_into(x.row(i), &mut out);
            for (p, t) in out.iter().zip(y.row(i)) {
                let e = p - t;
                sse += e * e;
            }
        }
        sse
    }
}

/// Feature columns, targets and per-feature sort orders shared by every tree
/// fitted on one dataset.
pub struct FitContext {
    n_rows: usize,
    n_features: usize,
    n_targets: usize,
    columns: Vec<Vec<f64>>,
    /// row-major n_rows x n_targets
    targets: Vec<f64>,
    /// per feature: row indices sorted by feature value
    sorted: Vec<Vec<u32>>,
}

impl FitContext {
    pub fn new(x: &Matrix, y: &Matrix) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::invalid("cannot fit on an empty feature matrix"));
        }
        if y.rows() != x.rows() || y.cols() == 0 {
            return Err(Error::Dimension {
                expected: x.rows(),
                got: y.rows(),
            });
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite("training data contains NaN or inf".into()));
        }
        let n = x.rows();
        let columns: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column(j)).collect();
        let sorted: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_unstable_by(|&a, &b| {
                    col[a as usize].partial_cmp(&col[b as usize]).expect("finite")
                });
                idx
            })
            .collect();
        Ok(FitContext {
            n_rows: n,
            n_features: x.cols(),
            n_targets: y.cols(),
            columns,
            targets: y.as_slice().to_vec(),
            sorted,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }
}

struct ActiveNode {
    /// index into the final node array
    node_index: usize,
    count: f64,
    /// offset into the per-depth sums scratch
    sum_offset: usize,
}

/// Fit one tree on the full dataset (optionally weighted by bootstrap
/// multiplicities). `stream` drives per-node feature subsampling only.
pub fn fit_tree_in_context(
    ctx: &FitContext,
    weights: Option<&[u32]>,
    cfg: &TreeConfig,
    stream: Stream,
) -> Result<RegressionTree> {
    let n = ctx.n_rows;
    let d = ctx.n_targets;
    let p = ctx.n_features;
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: w.len(),
            });
        }
    }
    if cfg.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be at least 1"));
    }
    if let Some(m) = cfg.feature_subsample {
        if m == 0 || m > p {
            return Err(Error::invalid("feature_subsample must lie in 1..=n_features"));
        }
    }

    let weight = |row: usize| -> f64 {
        match weights {
            Some(w) => w[row] as f64,
            None => 1.0,
        }
    };

    // root statistics
    let mut root_count = 0.0;
    let mut root_sum = alloc::vec![0.0; d];
    let mut node_of_row = alloc::vec![DEAD; n];
    for row in 0..n {
        let w = weight(row);
        if w > 0.0 {
            node_of_row[row] = 0;
            root_count += w;
            for (s, y) in root_sum.iter_mut().zip(&ctx.targets[row * d..(row + 1) * d]) {
                *s += w * y;
            }
        }
    }
    if root_count == 0.0 {
        return Err(Error::invalid("no rows with positive weight"));
    }

    let mut nodes = alloc::vec![TreeNode {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
    }];
    let mut leaf_values: Vec<f64> = Vec::new();
    let mut active = alloc::vec![ActiveNode {
        node_index: 0,
        count: root_count,
        sum_offset: 0,
    }];
    let mut sums = root_sum;

    // per-depth scratch, reused
    let mut seg_count: Vec<f64> = Vec::new();
    let mut seg_last: Vec<f64> = Vec::new();
    let mut seg_sum: Vec<f64> = Vec::new();
    let mut best_gain: Vec<f64> = Vec::new();
    let mut best_feature: Vec<u32> = Vec::new();
    let mut best_threshold: Vec<f64> = Vec::new();
    let mut masks: Vec<bool> = Vec::new();

    let finalize_leaf = |nodes: &mut Vec<TreeNode>,
                             leaf_values: &mut Vec<f64>,
                             node_index: usize,
                             count: f64,
                             sum: &[f64]| {
        let slot = (leaf_values.len() / d) as u32;
        leaf_values.extend(sum.iter().map(|s| s / count));
        nodes[node_index] = TreeNode {
            feature: LEAF,
            threshold: 0.0,
            left: slot,
            right: 0,
        };
    };

    for depth in 0..cfg.max_depth {
        let n_slots = active.len();
        if n_slots == 0 {
            break;
        }

        // parent score ||S||^2 / N per slot; a split must strictly beat it
        best_gain.clear();
        best_feature.clear();
        best_threshold.clear();
        for a in &active {
            let s = &sums[a.sum_offset..a.sum_offset + d];
            let sq: f64 = s.iter().map(|v| v * v).sum();
            best_gain.push(sq / a.count);
            best_feature.push(u32::MAX);
            best_threshold.push(0.0);
        }

        // per-node feature masks when subsampling
        let use_mask = matches!(cfg.feature_subsample, Some(m) if m < p);
        if use_mask {
            let m = cfg.feature_subsample.unwrap();
            masks.clear();
            masks.resize(n_slots * p, false);
            for slot in 0..n_slots {
                let mut rng = stream.indexed(depth as u64, slot as u64).rng();
                // partial Fisher-Yates over feature indices
                let mut pool: Vec<u32> = (0..p as u32).collect();
                for pick in 0..m {
                    let j = rng.random_range(pick..p);
                    pool.swap(pick, j);
                    masks[slot * p + pool[pick] as usize] = true;
                }
            }
        }

        seg_count.clear();
        seg_count.resize(n_slots, 0.0);
        seg_last.clear();
        seg_last.resize(n_slots, 0.0);
        seg_sum.clear();
        seg_sum.resize(n_slots * d, 0.0);

        for f in 0..p {
            seg_count.iter_mut().for_each(|c| *c = 0.0);
            seg_sum.iter_mut().for_each(|s| *s = 0.0);
            let col = &ctx.columns[f];
            for &row32 in &ctx.sorted[f] {
                let row = row32 as usize;
                let slot32 = node_of_row[row];
                if slot32 == DEAD {
                    continue;
                }
                let slot = slot32 as usize;
                if use_mask && !masks[slot * p + f] {
                    continue;
                }
                let v = col[row];
                let cnt = seg_count[slot];
                if cnt > 0.0 && v > seg_last[slot] {
                    let total = active[slot].count;
                    let n_right = total - cnt;
                    let min_leaf = cfg.min_samples_leaf as f64;
                    if cnt >= min_leaf && n_right >= min_leaf {
                        let sl = &seg_sum[slot * d..slot * d + d];
                        let stot = &sums[active[slot].sum_offset..active[slot].sum_offset + d];
                        let mut left_sq = 0.0;
                        let mut right_sq = 0.0;
                        for (l, t) in sl.iter().zip(stot) {
                            left_sq += l * l;
                            let r = t - l;
                            right_sq += r * r;
                        }
                        let score = left_sq / cnt + right_sq / n_right;
                        if score > best_gain[slot] {
                            let mut thr = 0.5 * (seg_last[slot] + v);
                            // midpoint can round up to v for adjacent floats
                            if thr >= v {
                                thr = seg_last[slot];
                            }
                            best_gain[slot] = score;
                            best_feature[slot] = f as u32;
                            best_threshold[slot] = thr;
                        }
                    }
                }
                let w = weight(row);
                let ys = &ctx.targets[row * d..(row + 1) * d];
                let acc = &mut seg_sum[slot * d..slot * d + d];
                for (a, y) in acc.iter_mut().zip(ys) {
                    *a += w * y;
                }
                seg_count[slot] += w;
                seg_last[slot] = v;
            }
        }

        // materialize splits and leaves; remap rows into child slots
        let mut child_slot_of: Vec<(u32, u32)> = alloc::vec![(DEAD, DEAD); n_slots];
        let mut new_active: Vec<ActiveNode> = Vec::new();
        let mut new_sums: Vec<f64> = Vec::new();
        for slot in 0..n_slots {
            if best_feature[slot] == u32::MAX {
                let a = &active[slot];
                let sum = sums[a.sum_offset..a.sum_offset + d].to_vec();
                finalize_leaf(&mut nodes, &mut leaf_values, a.node_index, a.count, &sum);
            } else {
                let left_index = nodes.len();
                nodes.push(TreeNode {
                    feature: LEAF,
                    threshold: 0.0,
                    left: 0,
                    right: 0,
                });
                nodes.push(TreeNode {
                    feature: LEAF,
                    threshold: 0.0,
                    left: 0,
                    right: 0,
                });
                nodes[active[slot].node_index] = TreeNode {
                    feature: best_feature[slot],
                    threshold: best_threshold[slot],
                    left: left_index as u32,
                    right: (left_index + 1) as u32,
                };
                let left_slot = new_active.len() as u32;
                child_slot_of[slot] = (left_slot, left_slot + 1);
                for child in 0..2 {
                    new_active.push(ActiveNode {
                        node_index: left_index + child,
                        count: 0.0,
                        sum_offset: new_sums.len(),
                    });
                    new_sums.resize(new_sums.len() + d, 0.0);
                }
            }
        }

        for row in 0..n {
            let slot32 = node_of_row[row];
            if slot32 == DEAD {
                continue;
            }
            let slot = slot32 as usize;
            let (l, r) = child_slot_of[slot];
            if l == DEAD {
                node_of_row[row] = DEAD;
                continue;
            }
            let f = best_feature[slot] as usize;
            let child = if ctx.columns[f][row] <= best_threshold[slot] { l } else { r };
            node_of_row[row] = child;
            let a = &mut new_active[child as usize];
            let w = weight(row);
            a.count += w;
            let ys = &ctx.targets[row * d..(row + 1) * d];
            let acc = &mut new_sums[a.sum_offset..a.sum_offset + d];
            for (s, y) in acc.iter_mut().zip(ys) {
                *s += w * y;
            }
        }

        active = new_active;
        sums = new_sums;
        if depth + 1 == cfg.max_depth || active.is_empty() {
            // remaining actives become leaves below
        }
    }

    for a in &active {
        let sum = sums[a.sum_offset..a.sum_offset + d].to_vec();
        finalize_leaf(&mut nodes, &mut leaf_values, a.node_index, a.count, &sum);
    }

    Ok(RegressionTree {
        nodes,
        leaf_values,
        n_features: p,
        n_targets: d,
    })
}

/// Fit a single tree on `(x, y)`; builds its own [`FitContext`].
pub fn fit_tree(x: &Matrix, y: &Matrix, cfg: &TreeConfig, stream: Stream) -> Result<RegressionTree> {
    let ctx = FitContext::new(x, y)?;
    fit_tree_in_context(&ctx, None, cfg, stream)
}
