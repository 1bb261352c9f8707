//! Random survival forest with log-rank splitting and Nelson-Aalen leaves.
//!
//! Each tree is grown on a bootstrap sample. At a node, `mtry` candidate
//! covariates are drawn and, per covariate, a handful of observed values are
//! tried as thresholds; the split maximizing the standardized two-sample
//! log-rank statistic wins, subject to both children containing at least
//! `min_leaf_events` events. Leaves hold the Nelson-Aalen cumulative hazard
//! of their samples; the ensemble averages cumulative hazards and returns
//! `S(t|x) = exp(-mean CHF(t|x))`.

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
pub struct SurvivalForestParams {
    pub n_trees: usize,
    /// Candidate covariates per split; defaults to `ceil(sqrt(p_active))`.
    pub mtry: Option<usize>,
    /// Minimum number of events in every leaf.
    pub min_leaf_events: usize,
    pub max_depth: Option<usize>,
    /// Random threshold candidates tried per covariate and split.
    pub n_split_candidates: usize,
    pub bootstrap: bool,
}

impl Default for SurvivalForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf_events: 5,
            max_depth: None,
            n_split_candidates: 10,
            bootstrap: true,
        }
    }
}

/// Nelson-Aalen step function: `chf[k]` is the cumulative hazard at and
/// after `times[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LeafChf {
    times: Vec<f64>,
    chf: Vec<f64>,
}

impl LeafChf {
    fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => self.chf[k - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct SurvivalTree {
    nodes: Vec<TreeNode>,
    leaves: Vec<LeafChf>,
}

impl SurvivalTree {
    fn chf_at(&self, x: &[f64], t: f64) -> f64 {
        self.leaves[descend(&self.nodes, x)].at(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalForest {
    pub params: SurvivalForestParams,
    pub seed: u64,
    pub n_features: usize,
    pub(crate) trees: Vec<SurvivalTree>,
}

impl SurvivalForest {
    /// Fits the forest on `(times, events)` with covariates `x`.
    ///
    /// The subset must contain at least one event; nodes with no admissible
    /// split become Nelson-Aalen leaves, so a forest of single-leaf trees is
    /// a valid (marginal) estimator, not an error.
    pub fn fit(
        x: &ColMatrix,
        times: &[f64],
        events: &[bool],
        params: &SurvivalForestParams,
        seed: u64,
    ) -> Result<Self> {
        let n = x.n_rows();
        if n == 0 {
            return Err(SurvError::EmptyInput("survival forest requires rows"));
        }
        if times.len() != n || events.len() != n {
            return Err(SurvError::InvalidArgument(
                "survival forest: times/events length mismatch".into(),
            ));
        }
        if !events.iter().any(|&e| e) {
            return Err(SurvError::TooFewEvents { required: 1, found: 0 });
        }
        if params.n_trees == 0 {
            return Err(SurvError::InvalidArgument("n_trees must be positive".into()));
        }

        let canonical = canonical_feature_order(x.names());
        let active = active_features(x, &canonical);
        let mtry = params
            .mtry
            .unwrap_or_else(|| (active.len().max(1) as f64).sqrt().ceil() as usize)
            .clamp(1, active.len().max(1));
        let rows = canonical_row_order(n, |a, b| {
            times[a]
                .total_cmp(&times[b])
                .then(events[a].cmp(&events[b]))
                .then(cmp_covariates(x, &canonical, a, b))
        });

        let ctx = TreeContext {
            x,
            times,
            events,
            rows: &rows,
            active: &active,
            mtry,
            params,
        };
        let trees: Vec<SurvivalTree> = (0..params.n_trees)
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

    /// Ensemble cumulative hazard at `(x, t)`.
    pub fn cumulative_hazard(&self, x: &[f64], t: f64) -> f64 {
        assert_eq!(x.len(), self.n_features, "covariate vector length mismatch");
        let sum: f64 = self.trees.iter().map(|tr| tr.chf_at(x, t)).sum();
        sum / self.trees.len() as f64
    }

    /// `S(t|x) = exp(-mean CHF)`; in `[0, 1]` and nonincreasing in `t`.
    pub fn survival(&self, x: &[f64], t: f64) -> f64 {
        (-self.cumulative_hazard(x, t)).exp()
    }
}

struct TreeContext<'a> {
    x: &'a ColMatrix,
    times: &'a [f64],
    events: &'a [bool],
    /// All fit rows in canonical content order.
    rows: &'a [usize],
    active: &'a [usize],
    mtry: usize,
    params: &'a SurvivalForestParams,
}

fn grow_tree(ctx: &TreeContext, rng: &mut ChaCha8Rng) -> SurvivalTree {
    let n = ctx.rows.len();
    let sample: Vec<usize> = bootstrap_positions(n, ctx.params.bootstrap, rng)
        .into_iter()
        .map(|pos| ctx.rows[pos])
        .collect();
    let mut tree = SurvivalTree {
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    build_node(ctx, sample, 0, rng, &mut tree);
    tree
}

fn build_node(
    ctx: &TreeContext,
    mut members: Vec<usize>,
    depth: usize,
    rng: &mut ChaCha8Rng,
    tree: &mut SurvivalTree,
) -> u32 {
    // Sort members by time ascending; the split scan walks it in reverse for
    // at-risk counts and the leaf builder walks it forward.
    members.sort_by(|&a, &b| ctx.times[a].total_cmp(&ctx.times[b]));
    let n_events = members.iter().filter(|&&i| ctx.events[i]).count();

    let depth_ok = ctx.params.max_depth.map_or(true, |d| depth < d);
    let can_split = depth_ok && n_events >= 2 * ctx.params.min_leaf_events;

    let split = if can_split {
        best_logrank_split(ctx, &members, rng)
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
            let leaf = nelson_aalen(ctx, &members);
            let leaf_idx = tree.leaves.len() as u32;
            tree.leaves.push(leaf);
            let at = tree.nodes.len();
            tree.nodes.push(TreeNode::Leaf { leaf: leaf_idx });
            at as u32
        }
    }
}

/// Nelson-Aalen estimator over time-sorted members.
fn nelson_aalen(ctx: &TreeContext, sorted_members: &[usize]) -> LeafChf {
    let m = sorted_members.len();
    let mut times = Vec::new();
    let mut chf = Vec::new();
    let mut acc = 0.0;
    let mut i = 0;
    while i < m {
        let t = ctx.times[sorted_members[i]];
        let at_risk = m - i;
        let mut d = 0usize;
        let mut j = i;
        while j < m && ctx.times[sorted_members[j]] == t {
            if ctx.events[sorted_members[j]] {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            acc += d as f64 / at_risk as f64;
            times.push(t);
            chf.push(acc);
        }
        i = j;
    }
    LeafChf { times, chf }
}

/// Scans `mtry` covariates with random threshold candidates and returns the
/// admissible `(feature, threshold)` maximizing the standardized log-rank
/// statistic.
fn best_logrank_split(
    ctx: &TreeContext,
    sorted_members: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    let m = sorted_members.len();
    let features = sample_without_replacement(ctx.active, ctx.mtry, rng);
    let mut best: Option<(f64, usize, f64)> = None;
    for &feature in &features {
        // Candidate thresholds: feature values of randomly drawn members.
        let mut candidates: Vec<f64> = (0..ctx.params.n_split_candidates)
            .map(|_| ctx.x.get(sorted_members[rand::Rng::gen_range(rng, 0..m)], feature))
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        for &threshold in &candidates {
            if let Some(stat) = logrank_statistic(ctx, sorted_members, feature, threshold) {
                let better = match best {
                    None => true,
                    Some((b, bf, bt)) => {
                        stat > b || (stat == b && (feature, threshold) < (bf, bt))
                    }
                };
                if better {
                    best = Some((stat, feature, threshold));
                }
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Standardized two-sample log-rank statistic for the partition
/// `x[feature] <= threshold`, or `None` when the split is inadmissible.
fn logrank_statistic(
    ctx: &TreeContext,
    sorted_members: &[usize],
    feature: usize,
    threshold: f64,
) -> Option<f64> {
    let m = sorted_members.len();
    let min_ev = ctx.params.min_leaf_events;

    let mut n_left = 0usize;
    let mut ev_left = 0usize;
    let mut ev_total = 0usize;
    for &i in sorted_members {
        let left = ctx.x.get(i, feature) <= threshold;
        if left {
            n_left += 1;
        }
        if ctx.events[i] {
            ev_total += 1;
            if left {
                ev_left += 1;
            }
        }
    }
    if n_left == 0 || n_left == m || ev_left < min_ev || ev_total - ev_left < min_ev {
        return None;
    }

    // Walk times descending, accumulating at-risk counts.
    let mut num = 0.0;
    let mut var = 0.0;
    let mut at_risk = 0usize;
    let mut at_risk_left = 0usize;
    let mut i = m;
    while i > 0 {
        let t = ctx.times[sorted_members[i - 1]];
        let mut d = 0usize;
        let mut d_left = 0usize;
        while i > 0 && ctx.times[sorted_members[i - 1]] == t {
            let idx = sorted_members[i - 1];
            let left = ctx.x.get(idx, feature) <= threshold;
            at_risk += 1;
            if left {
                at_risk_left += 1;
            }
            if ctx.events[idx] {
                d += 1;
                if left {
                    d_left += 1;
                }
            }
            i -= 1;
        }
        if d > 0 {
            let nf = at_risk as f64;
            let nl = at_risk_left as f64;
            let df = d as f64;
            num += d_left as f64 - df * nl / nf;
            if at_risk > 1 {
                var += df * (nl / nf) * (1.0 - nl / nf) * (nf - df) / (nf - 1.0);
            }
        }
    }
    if var > 0.0 {
        Some(num.abs() / var.sqrt())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::km::fit_kaplan_meier;
    use rand::Rng;

    fn matrix(rows: &[f64], n: usize, p: usize) -> ColMatrix {
        let names = (0..p).map(|j| format!("x{j}")).collect();
        ColMatrix::from_rows(rows, n, p, names)
    }

    fn weibull_time(rng: &mut rand_chacha::ChaCha8Rng, eta: f64, lambda: f64, f: f64) -> f64 {
        let u: f64 = rng.gen_range(1e-12..1.0);
        lambda * (-u.ln() / f.exp()).powf(1.0 / eta)
    }

    #[test]
    fn depth_zero_forest_is_marginal_nelson_aalen() {
        let times = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let events = vec![true, true, false, true, true, true];
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let params = SurvivalForestParams {
            n_trees: 1,
            max_depth: Some(0),
            bootstrap: false,
            min_leaf_events: 1,
            ..Default::default()
        };
        let forest = SurvivalForest::fit(&matrix(&x, 6, 1), &times, &events, &params, 3).unwrap();
        // Marginal NA: chf(2.5) = 1/6 + 1/5.
        let expect = (-(1.0 / 6.0 + 1.0 / 5.0f64)).exp();
        for probe in [-1.0, 0.0, 100.0] {
            assert!((forest.survival(&[probe], 2.5) - expect).abs() < 1e-12);
        }
        assert_eq!(forest.survival(&[0.0], 0.0), 1.0);
    }

    #[test]
    fn replicated_covariate_profile_matches_its_km() {
        // 200 iid draws sharing one covariate profile; the forest prediction
        // at that profile should track the sample's own product-limit curve.
        let n = 200;
        let mut rng = crate::rng::seeded(17);
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut x = Vec::new();
        for _ in 0..n {
            let t = weibull_time(&mut rng, 2.0, 10.0, 0.0);
            let c: f64 = rng.gen_range(0.0..30.0);
            times.push(t.min(c));
            events.push(t < c);
            x.push(1.5);
        }
        let params = SurvivalForestParams {
            n_trees: 100,
            ..Default::default()
        };
        let forest = SurvivalForest::fit(&matrix(&x, n, 1), &times, &events, &params, 9).unwrap();
        let km = fit_kaplan_meier(&times, &events).unwrap();
        let t_probe = 8.0;
        let diff = (forest.survival(&[1.5], t_probe) - km.survival_at(t_probe)).abs();
        assert!(diff < 0.05, "forest vs km diff {diff}");
    }

    #[test]
    fn informative_covariate_dominates_permutation_importance() {
        // T depends on x1 only; permuting x1 should hurt held-out concordance
        // more than permuting x2, on a clear majority of seeds.
        let n = 500;
        let mut wins = 0;
        for seed in 0..20u64 {
            let mut rng = crate::rng::seeded(crate::rng::derive_seed(100, 0, seed));
            let mut times = Vec::new();
            let events = vec![true; n];
            let mut xr = Vec::new();
            for _ in 0..n {
                let x1: f64 = rng.sample(rand_distr::StandardNormal);
                let x2: f64 = rng.sample(rand_distr::StandardNormal);
                times.push(weibull_time(&mut rng, 2.0, 10.0, x1));
                xr.extend_from_slice(&[x1, x2]);
            }
            let train = 350;
            let params = SurvivalForestParams {
                n_trees: 60,
                ..Default::default()
            };
            let train_x: Vec<f64> = xr[..train * 2].to_vec();
            let forest = SurvivalForest::fit(
                &matrix(&train_x, train, 2),
                &times[..train],
                &events[..train],
                &params,
                seed,
            )
            .unwrap();

            let held: Vec<(f64, [f64; 2])> = (train..n)
                .map(|i| (times[i], [xr[i * 2], xr[i * 2 + 1]]))
                .collect();
            let concordance = |perm: Option<usize>| -> f64 {
                let mut rng = crate::rng::seeded(777 + seed);
                let mut rows: Vec<[f64; 2]> = held.iter().map(|h| h.1).collect();
                if let Some(j) = perm {
                    for i in (1..rows.len()).rev() {
                        let k = rng.gen_range(0..=i);
                        let tmp = rows[i][j];
                        rows[i][j] = rows[k][j];
                        rows[k][j] = tmp;
                    }
                }
                let risks: Vec<f64> = rows.iter().map(|r| forest.cumulative_hazard(r, 8.0)).collect();
                let mut conc = 0.0;
                let mut total = 0.0;
                for a in 0..held.len() {
                    for b in (a + 1)..held.len() {
                        if held[a].0 == held[b].0 {
                            continue;
                        }
                        total += 1.0;
                        let (short, long) = if held[a].0 < held[b].0 { (a, b) } else { (b, a) };
                        if risks[short] > risks[long] {
                            conc += 1.0;
                        }
                    }
                }
                conc / total
            };
            let base = concordance(None);
            let drop1 = base - concordance(Some(0));
            let drop2 = base - concordance(Some(1));
            if drop1 > drop2 {
                wins += 1;
            }
        }
        assert!(wins >= 16, "x1 importance won only {wins}/20 seeds");
    }

    #[test]
    fn monotone_in_time_and_bounded() {
        let n = 120;
        let mut rng = crate::rng::seeded(4);
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut xr = Vec::new();
        for _ in 0..n {
            let x1: f64 = rng.sample(rand_distr::StandardNormal);
            times.push(weibull_time(&mut rng, 1.5, 5.0, 0.4 * x1));
            events.push(rng.gen_bool(0.8));
            xr.push(x1);
        }
        let forest = SurvivalForest::fit(
            &matrix(&xr, n, 1),
            &times,
            &events,
            &SurvivalForestParams {
                n_trees: 30,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        for k in 0..50 {
            let x = [(k as f64) / 10.0 - 2.5];
            let mut prev = 1.0 + 1e-15;
            for step in 0..40 {
                let s = forest.survival(&x, step as f64 * 0.5);
                assert!((0.0..=1.0).contains(&s));
                assert!(s <= prev + 1e-12);
                prev = s;
            }
        }
    }

    #[test]
    fn bit_identical_given_seed_and_invariant_to_row_and_column_order() {
        let n = 80;
        let mut rng = crate::rng::seeded(21);
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut rows = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            times.push(weibull_time(&mut rng, 2.0, 8.0, 0.7 * a));
            events.push(rng.gen_bool(0.7));
            rows.push([a, b]);
        }
        let params = SurvivalForestParams {
            n_trees: 12,
            ..Default::default()
        };
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let m1 = ColMatrix::from_rows(&flat, n, 2, vec!["alpha".into(), "beta".into()]);
        let f1 = SurvivalForest::fit(&m1, &times, &events, &params, 42).unwrap();
        let f1b = SurvivalForest::fit(&m1, &times, &events, &params, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&f1).unwrap(),
            serde_json::to_string(&f1b).unwrap()
        );

        // Row permutation.
        let perm: Vec<usize> = (0..n).rev().collect();
        let flat_p: Vec<f64> = perm.iter().flat_map(|&i| rows[i]).collect();
        let times_p: Vec<f64> = perm.iter().map(|&i| times[i]).collect();
        let events_p: Vec<bool> = perm.iter().map(|&i| events[i]).collect();
        let m2 = ColMatrix::from_rows(&flat_p, n, 2, vec!["alpha".into(), "beta".into()]);
        let f2 = SurvivalForest::fit(&m2, &times_p, &events_p, &params, 42).unwrap();
        // Column permutation (names travel with columns).
        let flat_c: Vec<f64> = rows.iter().flat_map(|r| [r[1], r[0]]).collect();
        let m3 = ColMatrix::from_rows(&flat_c, n, 2, vec!["beta".into(), "alpha".into()]);
        let f3 = SurvivalForest::fit(&m3, &times, &events, &params, 42).unwrap();
        for probe in [[-1.0, 0.3], [0.2, -0.4], [1.4, 2.0]] {
            let s1 = f1.survival(&probe, 6.0);
            assert_eq!(s1, f2.survival(&probe, 6.0));
            assert_eq!(s1, f3.survival(&[probe[1], probe[0]], 6.0));
        }
    }

    #[test]
    fn no_events_rejected_and_no_admissible_split_yields_leaf_trees() {
        let times = vec![1.0, 2.0];
        let x = vec![0.0, 1.0];
        assert!(matches!(
            SurvivalForest::fit(
                &matrix(&x, 2, 1),
                &times,
                &[false, false],
                &SurvivalForestParams::default(),
                1
            ),
            Err(SurvError::TooFewEvents { .. })
        ));
        // Two events < 2 * min_leaf_events: root stays a leaf.
        let forest = SurvivalForest::fit(
            &matrix(&x, 2, 1),
            &times,
            &[true, true],
            &SurvivalForestParams {
                n_trees: 3,
                bootstrap: false,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert_eq!(forest.trees[0].nodes.len(), 1);
        assert_eq!(forest.survival(&[0.0], 1.0), forest.survival(&[1.0], 1.0));
    }
}
