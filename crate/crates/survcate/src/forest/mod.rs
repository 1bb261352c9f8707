//! Tree-ensemble machinery shared by the survival, propensity, and
//! pseudo-outcome regression forests.
//!
//! Fits are bit-reproducible: every tree draws from an RNG stream derived
//! from `(seed, tree_index)`, so parallel and serial training agree. Inputs
//! are canonicalized internally (rows sorted by content, features by column
//! name) which makes fitted ensembles invariant to row order and to
//! covariate column order.

pub mod propensity;
pub mod regression;
pub mod survival;

pub use propensity::{PropensityForest, PropensityForestParams};
pub use regression::{RegressionForest, RegressionForestParams};
pub use survival::{SurvivalForest, SurvivalForestParams};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Column-major feature matrix with named columns.
#[derive(Debug, Clone)]
pub struct ColMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    names: Vec<String>,
}

impl ColMatrix {
    /// Builds from row-major data.
    pub fn from_rows(rows: &[f64], n_rows: usize, n_cols: usize, names: Vec<String>) -> Self {
        debug_assert_eq!(rows.len(), n_rows * n_cols);
        debug_assert_eq!(names.len(), n_cols);
        let mut values = vec![0.0; rows.len()];
        for i in 0..n_rows {
            for j in 0..n_cols {
                values[j * n_rows + i] = rows[i * n_cols + j];
            }
        }
        Self {
            values,
            n_rows,
            n_cols,
            names,
        }
    }

    pub fn from_design(dm: &crate::data::DesignMatrix) -> Self {
        Self::from_rows(&dm.values, dm.n_rows, dm.n_cols(), dm.info.col_names.clone())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n_rows + i]
    }
}

/// Feature indices sorted by column name; the order all per-tree feature
/// draws and split scans follow.
pub(crate) fn canonical_feature_order(names: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));
    order
}

/// Features (given in canonical order) with more than one distinct value over
/// the fit rows. Constant columns never enter the candidate pool, so adding
/// one does not perturb the RNG stream.
pub(crate) fn active_features(x: &ColMatrix, canonical: &[usize]) -> Vec<usize> {
    canonical
        .iter()
        .copied()
        .filter(|&j| {
            let col = x.col(j);
            let first = col[0];
            col.iter().any(|&v| v != first)
        })
        .collect()
}

/// Stable content sort of row indices; `key` maps a row to a comparison
/// sequence evaluated lazily.
pub(crate) fn canonical_row_order<F>(n: usize, mut cmp: F) -> Vec<usize>
where
    F: FnMut(usize, usize) -> std::cmp::Ordering,
{
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(a, b));
    order
}

/// Lexicographic comparison of two rows over the canonical feature order.
pub(crate) fn cmp_covariates(
    x: &ColMatrix,
    canonical: &[usize],
    a: usize,
    b: usize,
) -> std::cmp::Ordering {
    for &j in canonical {
        let o = x.get(a, j).total_cmp(&x.get(b, j));
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Draws `k` distinct elements from `pool` by partial Fisher-Yates.
pub(crate) fn sample_without_replacement(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut scratch: Vec<usize> = pool.to_vec();
    let k = k.min(scratch.len());
    for i in 0..k {
        let j = rng.gen_range(i..scratch.len());
        scratch.swap(i, j);
    }
    scratch.truncate(k);
    scratch
}

/// Bootstrap positions `0..n` with replacement, or the identity when
/// bootstrapping is disabled.
pub(crate) fn bootstrap_positions(n: usize, bootstrap: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

/// Arena node shared by all tree kinds; `Leaf` indexes into the tree's leaf
/// payload vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf: u32,
    },
}

/// Descends an arena from the root and returns the leaf payload index.
pub(crate) fn descend(nodes: &[TreeNode], x: &[f64]) -> usize {
    let mut at = 0usize;
    loop {
        match nodes[at] {
            TreeNode::Leaf { leaf } => return leaf as usize,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                at = if x[feature as usize] <= threshold {
                    left as usize
                } else {
                    right as usize
                };
            }
        }
    }
}
