//! Weighted regression forest for pseudo-outcome regression.
//!
//! Trees minimize the weighted squared error: splits maximize the weighted
//! variance reduction over an exact scan of candidate thresholds, and leaves
//! predict the weighted mean of their members.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    active_features, bootstrap_positions, canonical_feature_order, canonical_row_order,
    cmp_covariates, descend, sample_without_replacement, ColMatrix, TreeNode,
};
use crate::error::SurvError;
use crate::rng::{derive_seed, salt, seeded};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForestParams {
    pub n_trees: usize,
    /// Candidate covariates per split; defaults to `ceil(p_active / 3)`.
    pub mtry: Option<usize>,
    /// Minimum total weight in every leaf.
    pub min_leaf_weight: f64,
    /// Minimum row count in every leaf.
    pub min_leaf_samples: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for RegressionForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf_weight: 0.0,
            min_leaf_samples: 5,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct RegressionTree {
    nodes: Vec<TreeNode>,
    /// Leaf payload: weighted mean response.
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub params: RegressionForestParams,
    pub seed: u64,
    pub n_features: usize,
    pub(crate) trees: Vec<RegressionTree>,
}

impl RegressionForest {
    /// Fits on responses `y` with nonnegative per-row weights `w`.
    ///
    /// Zero-weight rows should be filtered by the caller; they would still
    /// participate in bootstrap draws otherwise.
    pub fn fit(
        x: &ColMatrix,
        y: &[f64],
        w: &[f64],
        params: &RegressionForestParams,
        seed: u64,
    ) -> Result<Self> {
        let n = x.n_rows();
        if n == 0 {
            return Err(SurvError::EmptyInput("regression forest requires rows"));
        }
        if y.len() != n || w.len() != n {
            return Err(SurvError::InvalidArgument(
                "regression forest: response/weight length mismatch".into(),
            ));
        }
        if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(SurvError::InvalidArgument(
                "regression forest: weights must be finite and nonnegative".into(),
            ));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(SurvError::AllWeightsZero);
        }
        if params.n_trees == 0 {
            return Err(SurvError::InvalidArgument("n_trees must be positive".into()));
        }

        let canonical = canonical_feature_order(x.names());
        let active = active_features(x, &canonical);
        let mtry = params
            .mtry
            .unwrap_or_else(|| ((active.len().max(1) as f64) / 3.0).ceil() as usize)
            .clamp(1, active.len().max(1));
        let rows = canonical_row_order(n, |a, b| {
            y[a].total_cmp(&y[b])
                .then(w[a].total_cmp(&w[b]))
                .then(cmp_covariates(x, &canonical, a, b))
        });

        let ctx = TreeContext {
            x,
            y,
            w,
            rows: &rows,
            active: &active,
            mtry,
            params,
        };
        let trees: Vec<RegressionTree> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seeded(derive_seed(seed, salt::TREE, t as u64));
                grow_tree(&ctx, &mut rng)
            })
            .collect();

        Ok(Self {
            params: params.clone(),
            seed,
            n_features: x.n_cols(),
            trees,
        })
    }

    /// Mean of per-tree leaf values.
    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_features, "covariate vector length mismatch");
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| t.values[descend(&t.nodes, x)])
            .sum();
        sum / self.trees.len() as f64
    }
}

struct TreeContext<'a> {
    x: &'a ColMatrix,
    y: &'a [f64],
    w: &'a [f64],
    rows: &'a [usize],
    active: &'a [usize],
    mtry: usize,
    params: &'a RegressionForestParams,
}

fn grow_tree(ctx: &TreeContext, rng: &mut ChaCha8Rng) -> RegressionTree {
    let n = ctx.rows.len();
    let sample: Vec<usize> = bootstrap_positions(n, ctx.params.bootstrap, rng)
        .into_iter()
        .map(|pos| ctx.rows[pos])
        .collect();
    let mut tree = RegressionTree {
        nodes: Vec::new(),
        values: Vec::new(),
    };
    build_node(ctx, sample, 0, rng, &mut tree);
    tree
}

fn build_node(
    ctx: &TreeContext,
    members: Vec<usize>,
    depth: usize,
    rng: &mut ChaCha8Rng,
    tree: &mut RegressionTree,
) -> u32 {
    let depth_ok = ctx.params.max_depth.map_or(true, |d| depth < d);
    let split = if depth_ok && members.len() >= 2 * ctx.params.min_leaf_samples.max(1) {
        best_variance_split(ctx, &members, rng)
    } else {
        None
    };

    match split {
        Some((feature, threshold)) => {
            let (left, right): (Vec<usize>, Vec<usize>) = members
                .iter()
                .partition(|&&i| ctx.x.get(i, feature) <= threshold);
            let at = tree.nodes.len();
            tree.nodes.push(TreeNode::Leaf { leaf: 0 }); // placeholder
            let l = build_node(ctx, left, depth + 1, rng, tree);
            let r = build_node(ctx, right, depth + 1, rng, tree);
            tree.nodes[at] = TreeNode::Split {
                feature: feature as u32,
                threshold,
                left: l,
                right: r,
            };
            at as u32
        }
        None => {
            let mut sw = 0.0;
            let mut swy = 0.0;
            for &i in &members {
                sw += ctx.w[i];
                swy += ctx.w[i] * ctx.y[i];
            }
            let value = if sw > 0.0 { swy / sw } else { 0.0 };
            let leaf_idx = tree.values.len() as u32;
            tree.values.push(value);
            let at = tree.nodes.len();
            tree.nodes.push(TreeNode::Leaf { leaf: leaf_idx });
            at as u32
        }
    }
}

/// Exact scan over sorted feature values maximizing the weighted
/// variance-reduction gain, honoring the leaf weight and count floors.
fn best_variance_split(
    ctx: &TreeContext,
    members: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    let features = sample_without_replacement(ctx.active, ctx.mtry, rng);
    let m = members.len();
    let min_w = ctx.params.min_leaf_weight;
    let min_n = ctx.params.min_leaf_samples.max(1);

    let mut total_w = 0.0;
    let mut total_wy = 0.0;
    for &i in members {
        total_w += ctx.w[i];
        total_wy += ctx.w[i] * ctx.y[i];
    }
    if total_w <= 0.0 {
        return None;
    }
    let parent_score = total_wy * total_wy / total_w;

    let mut best: Option<(f64, usize, f64)> = None;
    let mut scratch: Vec<(f64, f64, f64)> = Vec::with_capacity(m);
    for &feature in &features {
        scratch.clear();
        for &i in members {
            scratch.push((ctx.x.get(i, feature), ctx.y[i], ctx.w[i]));
        }
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut lw = 0.0;
        let mut lwy = 0.0;
        for k in 0..m - 1 {
            let (v, yi, wi) = scratch[k];
            lw += wi;
            lwy += wi * yi;
            // Only between distinct values.
            if v == scratch[k + 1].0 {
                continue;
            }
            let rn = m - (k + 1);
            let rw = total_w - lw;
            if (k + 1) < min_n || rn < min_n || lw < min_w || rw < min_w || lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let rwy = total_wy - lwy;
            let gain = lwy * lwy / lw + rwy * rwy / rw - parent_score;
            if gain <= 1e-12 * parent_score.abs().max(1.0) {
                continue;
            }
            let threshold = 0.5 * (v + scratch[k + 1].0);
            let better = match best {
                None => true,
                Some((bg, bf, bt)) => gain > bg || (gain == bg && (feature, threshold) < (bf, bt)),
            };
            if better {
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn matrix(rows: &[f64], n: usize, p: usize) -> ColMatrix {
        let names = (0..p).map(|j| format!("x{j}")).collect();
        ColMatrix::from_rows(rows, n, p, names)
    }

    #[test]
    fn constant_response_predicts_the_constant() {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y = vec![0.7; n];
        let w = vec![1.0; n];
        let forest = RegressionForest::fit(
            &matrix(&x, n, 1),
            &y,
            &w,
            &RegressionForestParams {
                n_trees: 10,
                min_leaf_weight: 2.0,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        for probe in [-3.0, 0.0, 11.5, 100.0] {
            assert!((forest.predict(&[probe]) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_step_function() {
        let n = 400;
        let mut rng = crate::rng::seeded(8);
        let mut xr = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let v: f64 = rng.gen_range(-2.0..2.0);
            xr.push(v);
            y.push(if v > 0.0 { 1.0 } else { -1.0 });
        }
        let w = vec![1.0; n];
        let forest = RegressionForest::fit(
            &matrix(&xr, n, 1),
            &y,
            &w,
            &RegressionForestParams {
                n_trees: 50,
                min_leaf_weight: 5.0,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        assert!(forest.predict(&[1.0]) > 0.9);
        assert!(forest.predict(&[-1.0]) < -0.9);
    }

    #[test]
    fn weighted_fit_follows_the_heavy_rows() {
        // Same x, two response groups; weights pick the leaf mean.
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 3.0 } else { 1.0 }).collect();
        let forest = RegressionForest::fit(
            &matrix(&x, n, 1),
            &y,
            &w,
            &RegressionForestParams {
                n_trees: 20,
                min_leaf_weight: 1.0,
                max_depth: Some(0),
                bootstrap: false,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        assert!((forest.predict(&[0.0]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_zero_weights_rejected() {
        let x = vec![0.0, 1.0];
        assert!(matches!(
            RegressionForest::fit(
                &matrix(&x, 2, 1),
                &[1.0, 2.0],
                &[0.0, 0.0],
                &RegressionForestParams::default(),
                1
            ),
            Err(SurvError::AllWeightsZero)
        ));
    }

    #[test]
    fn constant_column_never_perturbs_the_fit() {
        let n = 120;
        let mut rng = crate::rng::seeded(14);
        let mut rows2 = Vec::new();
        let mut rows3 = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            rows2.extend_from_slice(&[a, b]);
            rows3.extend_from_slice(&[a, b, 5.0]);
            y.push(2.0 * a - b + 0.1);
        }
        let w = vec![1.0; n];
        let params = RegressionForestParams {
            n_trees: 15,
            min_leaf_weight: 2.0,
            mtry: Some(1),
            ..Default::default()
        };
        let f2 = RegressionForest::fit(
            &ColMatrix::from_rows(&rows2, n, 2, vec!["a".into(), "b".into()]),
            &y,
            &w,
            &params,
            7,
        )
        .unwrap();
        let f3 = RegressionForest::fit(
            &ColMatrix::from_rows(&rows3, n, 3, vec!["a".into(), "b".into(), "konst".into()]),
            &y,
            &w,
            &params,
            7,
        )
        .unwrap();
        for probe in [[-0.5, 0.7], [1.2, -0.3]] {
            assert_eq!(f2.predict(&probe), f3.predict(&[probe[0], probe[1], 5.0]));
        }
    }
}
