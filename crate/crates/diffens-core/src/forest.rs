//! Bootstrap random forests over multi-target CART trees, with per-tree
//! predictions exposed for ensemble aggregation.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Stream;
use crate::tree::{fit_tree_in_context, FitContext, RegressionTree, TreeConfig};

const TAG_TREE: u64 = 0x7e;
const TAG_BOOT: u64 = 0xb0;
const TAG_FEAT: u64 = 0xfe;

/// Forest-level configuration; tree options are embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// `None` considers all features at every node.
    pub feature_subsample: Option<usize>,
    /// Train each tree on an independent size-n resample with replacement.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 7,
            min_samples_leaf: 1,
            feature_subsample: None,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            feature_subsample: self.feature_subsample,
        }
    }
}

/// A fitted forest. `(data, config, seed)` fully determine the result; tree
/// `k` derives its own streams from the forest stream, so trees may be fitted
/// in any order or in parallel without changing the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(x: &Matrix, y: &Matrix, cfg: &ForestConfig, stream: Stream) -> Result<Self> {
        let ctx = FitContext::new(x, y)?;
        Self::fit_in_context(&ctx, cfg, stream)
    }

    pub fn fit_in_context(ctx: &FitContext, cfg: &ForestConfig, stream: Stream) -> Result<Self> {
        if cfg.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        let trees = (0..cfg.n_trees)
            .map(|k| Self::fit_single_tree(ctx, cfg, stream, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomForest { trees })
    }

    /// Fit tree `k` of the forest identified by `forest_stream`; the building
    /// block for parallel trainers.
    pub fn fit_single_tree(
        ctx: &FitContext,
        cfg: &ForestConfig,
        forest_stream: Stream,
        k: usize,
    ) -> Result<RegressionTree> {
        let tree_stream = forest_stream.indexed(TAG_TREE, k as u64);
        let weights = if cfg.bootstrap {
            Some(bootstrap_weights(ctx.n_rows(), tree_stream.child(TAG_BOOT)))
        } else {
            None
        };
        fit_tree_in_context(
            ctx,
            weights.as_deref(),
            &cfg.tree_config(),
            tree_stream.child(TAG_FEAT),
        )
    }

    pub fn from_trees(trees: Vec<RegressionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        let (p, d) = (trees[0].n_features(), trees[0].n_targets());
        if trees.iter().any(|t| t.n_features() != p || t.n_targets() != d) {
            return Err(Error::invalid("trees disagree on input/output dimensions"));
        }
        Ok(RandomForest { trees })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    pub fn n_targets(&self) -> usize {
        self.trees[0].n_targets()
    }

    /// K x d matrix of per-tree predictions.
    pub fn predict_per_tree(&self, x: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(self.n_trees(), self.n_targets());
        self.predict_per_tree_into(x, &mut out);
        out
    }

    pub fn predict_per_tree_into(&self, x: &[f64], out: &mut Matrix) {
        debug_assert_eq!(out.rows(), self.n_trees());
        for (k, tree) in self.trees.iter().enumerate() {
            tree.predict_into(x, out.row_mut(k));
        }
    }

    /// Arithmetic mean of the per-tree predictions.
    pub fn predict_mean(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = alloc::vec![0.0; self.n_targets()];
        let mut row = alloc::vec![0.0; self.n_targets()];
        for tree in &self.trees {
            tree.predict_into(x, &mut row);
            for (a, v) in acc.iter_mut().zip(&row) {
                *a += v;
            }
        }
        let inv = 1.0 / self.trees.len() as f64;
        for a in acc.iter_mut() {
            *a *= inv;
        }
        acc
    }
}

/// Multiplicities of a size-n resample drawn with replacement.
pub fn bootstrap_weights(n: usize, stream: Stream) -> Vec<u32> {
    let mut rng = stream.rng();
    let mut w = alloc::vec![0u32; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1;
    }
    w
}
