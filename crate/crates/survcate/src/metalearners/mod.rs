//! The six pseudo-outcome meta-learners: `(Y*, w^M)` construction on the
//! complete-case subset and the weighted step-2 regression yielding the
//! CATE model.
//!
//! Every learner minimizes the doubly weighted squared error
//! `sum_i w^C_i w^M_i (Y*_i - tau(x_i))^2` over complete cases; they differ
//! only in how `Y*` and `w^M` are built from the nuisance bundle.

pub mod ridge;

pub use ridge::RidgeModel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, CovariateSchema, DesignInfo, TargetTime};
use crate::error::SurvError;
use crate::forest::{ColMatrix, PropensityForest, RegressionForest, RegressionForestParams};
use crate::nuisance::{build_nuisance_bundle, NuisanceBundle, NuisanceConfig, NuisanceFit};
use crate::rng::{derive_seed, salt, seeded};
use crate::Result;

/// Rows with `|A - e_hat|` below this are dropped from the R-learner set:
/// the pseudo-outcome divides by `A - e_hat` and the loss weight makes them
/// negligible anyway.
pub const R_SINGULARITY_EPS: f64 = 0.01;

/// The six pseudo-outcome meta-learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    X,
    M,
    Dr,
    D,
    Dea,
    R,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::X,
        LearnerKind::M,
        LearnerKind::Dr,
        LearnerKind::D,
        LearnerKind::Dea,
        LearnerKind::R,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::X => "X",
            LearnerKind::M => "M",
            LearnerKind::Dr => "DR",
            LearnerKind::D => "D",
            LearnerKind::Dea => "DEA",
            LearnerKind::R => "R",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "X" => Ok(LearnerKind::X),
            "M" => Ok(LearnerKind::M),
            "DR" => Ok(LearnerKind::Dr),
            "D" => Ok(LearnerKind::D),
            "DEA" => Ok(LearnerKind::Dea),
            "R" => Ok(LearnerKind::R),
            other => Err(SurvError::InvalidArgument(format!(
                "unknown learner {other:?} (expected one of X, M, DR, D, DEA, R)"
            ))),
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One complete-case row of a pseudo-outcome set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoRow {
    /// Cohort row index.
    pub index: usize,
    pub arm: u8,
    pub y_star: f64,
    pub w_m: f64,
    pub w_c: f64,
}

/// Learner-specific `(Y*, w^M, w^C)` triples on the complete-case subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOutcomeSet {
    pub learner: LearnerKind,
    pub t_star: f64,
    pub rows: Vec<PseudoRow>,
    /// R-learner rows dropped at the `|A - e|` singularity.
    pub n_dropped_singular: usize,
}

impl PseudoOutcomeSet {
    pub fn arm_rows(&self, arm: u8) -> impl Iterator<Item = &PseudoRow> {
        self.rows.iter().filter(move |r| r.arm == arm)
    }
}

/// Builds `(Y*, w^M)` per the learner's rule for every complete-case row.
pub fn build_pseudo_outcomes(bundle: &NuisanceBundle, learner: LearnerKind) -> Result<PseudoOutcomeSet> {
    build_pseudo_outcomes_with(bundle, learner, R_SINGULARITY_EPS)
}

/// As [`build_pseudo_outcomes`] with an explicit R-learner singularity
/// threshold.
pub fn build_pseudo_outcomes_with(
    bundle: &NuisanceBundle,
    learner: LearnerKind,
    r_eps: f64,
) -> Result<PseudoOutcomeSet> {
    let view = &bundle.view;
    let mut rows = Vec::with_capacity(view.n_complete);
    let mut n_dropped_singular = 0usize;
    for (k, &i) in view.indices.iter().enumerate() {
        let a = bundle.treatment[i];
        let af = a as f64;
        let ind = if view.survival_indicator[k] { 1.0 } else { 0.0 };
        let e = bundle.propensity[i];
        let s0 = bundle.surv0[i];
        let s1 = bundle.surv1[i];
        let s = bundle.surv_pooled[i];
        let w_c = bundle.censor_weight[i].ok_or_else(|| {
            SurvError::MissingNuisance {
                learner: learner.name().into(),
                component: format!("censoring weight for complete-case row {i}"),
            }
        })?;
        let sign = 2.0 * af - 1.0;
        let (y_star, w_m) = match learner {
            LearnerKind::X => {
                if a == 1 {
                    (ind - s0, 1.0)
                } else {
                    (s1 - ind, 1.0)
                }
            }
            LearnerKind::M => ((af - e) / (e * (1.0 - e)) * ind, 1.0),
            LearnerKind::Dr => {
                let s_a = if a == 1 { s1 } else { s0 };
                ((af - e) / (e * (1.0 - e)) * (ind - s_a) + s1 - s0, 1.0)
            }
            LearnerKind::D => (2.0 * sign * ind, sign * (af - e) / (4.0 * e * (1.0 - e))),
            LearnerKind::Dea => (
                2.0 * sign * (ind - s),
                sign * (af - e) / (4.0 * e * (1.0 - e)),
            ),
            LearnerKind::R => {
                if (af - e).abs() < r_eps {
                    n_dropped_singular += 1;
                    continue;
                }
                ((ind - s) / (af - e), (af - e) * (af - e))
            }
        };
        rows.push(PseudoRow {
            index: i,
            arm: a,
            y_star,
            w_m,
            w_c,
        });
    }
    Ok(PseudoOutcomeSet {
        learner,
        t_star: bundle.t_star,
        rows,
        n_dropped_singular,
    })
}

/// Step-2 regressor backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "backend")]
pub enum RegressorConfig {
    Forest {
        n_trees: usize,
        mtry: Option<usize>,
        /// Defaults to `10 * median(w^C * w^M)` over retained rows.
        min_leaf_weight: Option<f64>,
        min_leaf_samples: usize,
        max_depth: Option<usize>,
        bootstrap: bool,
    },
    Ridge {
        alpha: f64,
    },
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig::Forest {
            n_trees: 500,
            mtry: None,
            min_leaf_weight: None,
            min_leaf_samples: 5,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) enum Regressor {
    Forest(RegressionForest),
    Ridge(RidgeModel),
}

impl Regressor {
    fn predict(&self, design_row: &[f64]) -> f64 {
        match self {
            Regressor::Forest(f) => f.predict(design_row),
            Regressor::Ridge(m) => m.predict(design_row),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) enum CateRepr {
    /// A single pseudo-outcome regressor.
    Single(Regressor),
    /// X-learner: arm-specific regressors blended by the propensity score,
    /// `tau(x) = e(x) tau0(x) + (1 - e(x)) tau1(x)`.
    XBlend {
        tau0: Regressor,
        tau1: Regressor,
        propensity: PropensityForest,
    },
}

/// A fitted CATE model; predictions are clamped to `[-1, 1]` since the
/// estimand is a difference of probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CateModel {
    pub learner: LearnerKind,
    pub t_star: f64,
    pub schema: CovariateSchema,
    pub(crate) design: DesignInfo,
    pub(crate) repr: CateRepr,
}

impl CateModel {
    /// Column layout of the model's expanded design space.
    pub fn design(&self) -> &DesignInfo {
        &self.design
    }

    /// Predicts `tau(x; t*)` for an original-space covariate vector.
    pub fn predict(&self, covariates: &[f64]) -> Result<f64> {
        if covariates.len() != self.schema.len() {
            return Err(SurvError::SchemaMismatch(format!(
                "expected {} covariates, got {}",
                self.schema.len(),
                covariates.len()
            )));
        }
        for j in 0..self.schema.len() {
            self.schema.validate_value(j, covariates[j])?;
        }
        let row = self.design.expand(covariates);
        Ok(self.predict_design(&row))
    }

    /// Prediction from an already expanded design row.
    pub fn predict_design(&self, design_row: &[f64]) -> f64 {
        let raw = match &self.repr {
            CateRepr::Single(r) => r.predict(design_row),
            CateRepr::XBlend {
                tau0,
                tau1,
                propensity,
            } => {
                let e = propensity.predict(design_row);
                e * tau0.predict(design_row) + (1.0 - e) * tau1.predict(design_row)
            }
        };
        raw.clamp(-1.0, 1.0)
    }

    /// The unblended arm components of an X-learner model, if any.
    pub fn x_components(&self, design_row: &[f64]) -> Option<(f64, f64, f64)> {
        match &self.repr {
            CateRepr::XBlend {
                tau0,
                tau1,
                propensity,
            } => Some((
                tau0.predict(design_row),
                tau1.predict(design_row),
                propensity.predict(design_row),
            )),
            _ => None,
        }
    }
}

fn fit_regressor(
    design: &DesignInfo,
    cohort: &Cohort,
    rows: &[PseudoRow],
    config: &RegressorConfig,
    seed: u64,
) -> Result<Regressor> {
    // Zero-weight rows are dropped so they cannot enter bootstrap draws.
    let kept: Vec<&PseudoRow> = rows.iter().filter(|r| r.w_m * r.w_c > 0.0).collect();
    if kept.is_empty() {
        return Err(SurvError::AllWeightsZero);
    }
    if kept.len() < 2 {
        return Err(SurvError::InvalidArgument(
            "pseudo-outcome regression needs at least two weighted rows".into(),
        ));
    }
    let p = design.n_cols;
    let mut flat = Vec::with_capacity(kept.len() * p);
    let mut y = Vec::with_capacity(kept.len());
    let mut w = Vec::with_capacity(kept.len());
    let mut scratch = vec![0.0; p];
    for r in &kept {
        design.expand_into(&cohort.records()[r.index].covariates, &mut scratch);
        flat.extend_from_slice(&scratch);
        y.push(r.y_star);
        w.push(r.w_m * r.w_c);
    }
    match config {
        RegressorConfig::Ridge { alpha } => Ok(Regressor::Ridge(RidgeModel::fit(&flat, &y, &w, p, *alpha)?)),
        RegressorConfig::Forest {
            n_trees,
            mtry,
            min_leaf_weight,
            min_leaf_samples,
            max_depth,
            bootstrap,
        } => {
            let min_w = min_leaf_weight.unwrap_or_else(|| {
                let mut ws = w.clone();
                ws.sort_by(f64::total_cmp);
                let median = ws[ws.len() / 2];
                10.0 * median
            });
            let params = RegressionForestParams {
                n_trees: *n_trees,
                mtry: *mtry,
                min_leaf_weight: min_w,
                min_leaf_samples: *min_leaf_samples,
                max_depth: *max_depth,
                bootstrap: *bootstrap,
            };
            let x = ColMatrix::from_rows(&flat, kept.len(), p, design.col_names.clone());
            Ok(Regressor::Forest(RegressionForest::fit(&x, &y, &w, &params, seed)?))
        }
    }
}

/// Step 2: fits the weighted pseudo-outcome regression.
///
/// The X-learner fits `tau0` on control rows and `tau1` on treated rows and
/// blends them with the supplied propensity model; all other learners fit a
/// single regressor. Rows with zero combined weight are ignored.
pub fn fit_cate(
    cohort: &Cohort,
    t: TargetTime,
    pseudo: &PseudoOutcomeSet,
    propensity: Option<&PropensityForest>,
    config: &RegressorConfig,
    seed: u64,
) -> Result<CateModel> {
    if pseudo.rows.is_empty() {
        return Err(SurvError::EmptyCompleteCase { t_star: t.value() });
    }
    let design = DesignInfo::for_schema(cohort.schema());
    let repr = if pseudo.learner == LearnerKind::X {
        let arm0: Vec<PseudoRow> = pseudo.arm_rows(0).copied().collect();
        let arm1: Vec<PseudoRow> = pseudo.arm_rows(1).copied().collect();
        if arm0.is_empty() || arm1.is_empty() {
            return Err(SurvError::EmptyArm {
                arm: if arm0.is_empty() { 0 } else { 1 },
                context: "X-learner arm-specific regression".into(),
            });
        }
        let propensity = propensity
            .ok_or_else(|| SurvError::MissingNuisance {
                learner: "X".into(),
                component: "propensity model for blending".into(),
            })?
            .clone();
        let tau0 = fit_regressor(&design, cohort, &arm0, config, derive_seed(seed, salt::CATE_REGRESSOR, 0))?;
        let tau1 = fit_regressor(&design, cohort, &arm1, config, derive_seed(seed, salt::CATE_REGRESSOR, 1))?;
        CateRepr::XBlend {
            tau0,
            tau1,
            propensity,
        }
    } else {
        CateRepr::Single(fit_regressor(
            &design,
            cohort,
            &pseudo.rows,
            config,
            derive_seed(seed, salt::CATE_REGRESSOR, 0),
        )?)
    };
    Ok(CateModel {
        learner: pseudo.learner,
        t_star: t.value(),
        schema: cohort.schema().clone(),
        design,
        repr,
    })
}

/// Bundled configuration for the full two-step pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub nuisance: NuisanceConfig,
    pub regressor: RegressorConfig,
    pub r_singularity_eps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            nuisance: NuisanceConfig::default(),
            regressor: RegressorConfig::default(),
            r_singularity_eps: R_SINGULARITY_EPS,
        }
    }
}

/// A fitted two-step estimate with its intermediate products.
pub struct CateEstimate {
    pub nuisance: NuisanceFit,
    pub pseudo: PseudoOutcomeSet,
    pub model: CateModel,
}

/// Runs the two-step algorithm: nuisance estimation, pseudo-outcome
/// construction, and the weighted regression. Nuisances and the regression
/// use the same data (no sample splitting); use [`cross_fit_cate`] for
/// honest out-of-sample predictions.
pub fn estimate_cate(
    cohort: &Cohort,
    t: TargetTime,
    learner: LearnerKind,
    config: &PipelineConfig,
    seed: u64,
) -> Result<CateEstimate> {
    let nuisance = build_nuisance_bundle(cohort, t, &config.nuisance, seed)?;
    let pseudo = build_pseudo_outcomes_with(&nuisance.bundle, learner, config.r_singularity_eps)?;
    let model = fit_cate(cohort, t, &pseudo, Some(&nuisance.propensity), &config.regressor, seed)?;
    Ok(CateEstimate {
        nuisance,
        pseudo,
        model,
    })
}

/// Out-of-fold CATE predictions from k-fold cross-fitting.
pub struct CrossFitResult {
    /// One out-of-fold prediction per cohort row.
    pub tau_hat: Vec<f64>,
    /// Fold id per cohort row.
    pub fold: Vec<usize>,
    pub models: Vec<CateModel>,
}

/// Partitions rows into `k` folds stratified by `(A, delta)`, runs the
/// two-step pipeline on each training complement, and predicts on the
/// held-out fold, so every subject receives exactly one out-of-fold
/// prediction.
pub fn cross_fit_cate(
    cohort: &Cohort,
    t: TargetTime,
    learner: LearnerKind,
    k_folds: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<CrossFitResult> {
    let n = cohort.n();
    if k_folds < 2 || k_folds > n {
        return Err(SurvError::InvalidArgument(format!(
            "k_folds must lie in [2, n], got {k_folds}"
        )));
    }
    let assignment = stratified_folds(cohort, k_folds, seed)
        .or_else(|_| stratified_folds(cohort, k_folds, derive_seed(seed, salt::FOLD, u64::MAX)))?;

    let folds: Vec<usize> = (0..k_folds).collect();
    let fitted: Vec<Result<(usize, CateModel, Vec<(usize, f64)>)>> = folds
        .par_iter()
        .map(|&f| {
            let train_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            validate_training_fold(cohort, &train_idx, f)?;
            let records: Vec<_> = train_idx.iter().map(|&i| cohort.records()[i].clone()).collect();
            let train = Cohort::new(cohort.schema().clone(), records)?;
            let est = estimate_cate(&train, t, learner, config, derive_seed(seed, salt::FOLD, f as u64))?;
            let mut preds = Vec::with_capacity(test_idx.len());
            for &i in &test_idx {
                preds.push((i, est.model.predict(&cohort.records()[i].covariates)?));
            }
            Ok((f, est.model, preds))
        })
        .collect();

    let mut tau_hat = vec![f64::NAN; n];
    let mut models = Vec::with_capacity(k_folds);
    for r in fitted {
        let (_, model, preds) = r?;
        for (i, v) in preds {
            tau_hat[i] = v;
        }
        models.push(model);
    }
    debug_assert!(tau_hat.iter().all(|v| v.is_finite()));
    Ok(CrossFitResult {
        tau_hat,
        fold: assignment,
        models,
    })
}

/// Stratified fold assignment by `(A, delta)`: each stratum is shuffled and
/// dealt round-robin.
fn stratified_folds(cohort: &Cohort, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cohort.n();
    let mut assignment = vec![0usize; n];
    let mut rng = seeded(derive_seed(seed, salt::FOLD, 0));
    let mut offset = 0usize;
    for arm in 0..2u8 {
        for event in [false, true] {
            let mut stratum: Vec<usize> = (0..n)
                .filter(|&i| {
                    let r = &cohort.records()[i];
                    r.treatment == arm && r.event == event
                })
                .collect();
            // Fisher-Yates within the stratum.
            for i in (1..stratum.len()).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                stratum.swap(i, j);
            }
            for (pos, &i) in stratum.iter().enumerate() {
                assignment[i] = (offset + pos) % k;
            }
            offset += stratum.len();
        }
    }
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        validate_training_fold(cohort, &train, f)?;
    }
    Ok(assignment)
}

fn validate_training_fold(cohort: &Cohort, train: &[usize], fold: usize) -> Result<()> {
    for arm in 0..2u8 {
        let mut any = false;
        let mut any_event = false;
        for &i in train {
            let r = &cohort.records()[i];
            if r.treatment == arm {
                any = true;
                if r.event {
                    any_event = true;
                }
            }
        }
        if !any {
            return Err(SurvError::DegenerateFold {
                fold,
                what: format!("rows in arm {arm}"),
            });
        }
        if !any_event {
            return Err(SurvError::DegenerateFold {
                fold,
                what: format!("events in arm {arm}"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CompleteCaseView, SurvivalRecord};

    fn toy_bundle(
        rows: &[(u8, bool)], // (arm, indicator)
        e: f64,
        s0: f64,
        s1: f64,
        s: f64,
    ) -> NuisanceBundle {
        let n = rows.len();
        let view = CompleteCaseView {
            indices: (0..n).collect(),
            survival_indicator: rows.iter().map(|r| r.1).collect(),
            n_complete: n,
            t_star: 5.0,
        };
        NuisanceBundle::from_parts(
            5.0,
            rows.iter().map(|r| r.0).collect(),
            vec![e; n],
            vec![s0; n],
            vec![s1; n],
            vec![s; n],
            vec![Some(1.0); n],
            view,
            20.0,
        )
        .unwrap()
    }

    #[test]
    fn m_learner_table_entry() {
        let bundle = toy_bundle(&[(1, true)], 0.5, 0.5, 0.5, 0.5);
        let ps = build_pseudo_outcomes(&bundle, LearnerKind::M).unwrap();
        assert!((ps.rows[0].y_star - 2.0).abs() < 1e-15);
        assert_eq!(ps.rows[0].w_m, 1.0);
    }

    #[test]
    fn d_learner_table_entry() {
        let bundle = toy_bundle(&[(0, true)], 0.25, 0.5, 0.5, 0.5);
        let ps = build_pseudo_outcomes(&bundle, LearnerKind::D).unwrap();
        assert!((ps.rows[0].y_star - (-2.0)).abs() < 1e-15);
        assert!((ps.rows[0].w_m - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn r_learner_table_entry() {
        let bundle = toy_bundle(&[(1, true)], 0.25, 0.5, 0.5, 0.4);
        let ps = build_pseudo_outcomes(&bundle, LearnerKind::R).unwrap();
        assert!((ps.rows[0].y_star - 0.8).abs() < 1e-15);
        assert!((ps.rows[0].w_m - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn dr_equals_dea_at_half_propensity_and_equal_survivals() {
        for &(arm, ind) in &[(0u8, false), (0, true), (1, false), (1, true)] {
            let bundle = toy_bundle(&[(arm, ind)], 0.5, 0.44, 0.44, 0.44);
            let dr = build_pseudo_outcomes(&bundle, LearnerKind::Dr).unwrap();
            let dea = build_pseudo_outcomes(&bundle, LearnerKind::Dea).unwrap();
            assert!((dr.rows[0].y_star - dea.rows[0].y_star).abs() < 1e-12);
        }
    }

    #[test]
    fn d_and_dea_weights_nonnegative() {
        for e in [0.01, 0.2, 0.5, 0.8, 0.99] {
            for arm in 0..2u8 {
                let bundle = toy_bundle(&[(arm, true)], e, 0.5, 0.5, 0.5);
                let ps = build_pseudo_outcomes(&bundle, LearnerKind::D).unwrap();
                assert!(ps.rows[0].w_m > 0.0, "e={e} arm={arm}");
            }
        }
    }

    #[test]
    fn r_learner_drops_singular_rows() {
        let bundle = toy_bundle(&[(1, true), (0, true)], 0.995, 0.5, 0.5, 0.5);
        let ps = build_pseudo_outcomes(&bundle, LearnerKind::R).unwrap();
        assert_eq!(ps.n_dropped_singular, 1);
        assert_eq!(ps.rows.len(), 1);
        assert_eq!(ps.rows[0].arm, 0);
    }

    fn constant_pseudo_cohort(n: usize, c: f64) -> (Cohort, PseudoOutcomeSet, TargetTime) {
        let schema = CovariateSchema::continuous(&["x1"]).unwrap();
        let mut rng = crate::rng::seeded(4);
        let records: Vec<SurvivalRecord> = (0..n)
            .map(|i| {
                SurvivalRecord::new(
                    10.0 + i as f64,
                    true,
                    (i % 2) as u8,
                    vec![rand::Rng::gen_range(&mut rng, -2.0..2.0)],
                )
            })
            .collect();
        let cohort = Cohort::new(schema, records).unwrap();
        let rows: Vec<PseudoRow> = (0..n)
            .map(|i| PseudoRow {
                index: i,
                arm: (i % 2) as u8,
                y_star: c,
                w_m: 1.0,
                w_c: 1.0,
            })
            .collect();
        let pseudo = PseudoOutcomeSet {
            learner: LearnerKind::Dr,
            t_star: 5.0,
            rows,
            n_dropped_singular: 0,
        };
        (cohort, pseudo, TargetTime::new(5.0).unwrap())
    }

    #[test]
    fn constant_pseudo_outcomes_give_constant_model() {
        let (cohort, pseudo, t) = constant_pseudo_cohort(40, 0.37);
        let config = RegressorConfig::Forest {
            n_trees: 10,
            mtry: None,
            min_leaf_weight: None,
            min_leaf_samples: 2,
            max_depth: None,
            bootstrap: true,
        };
        let model = fit_cate(&cohort, t, &pseudo, None, &config, 1).unwrap();
        for x in [-1.5, 0.0, 2.0] {
            assert!((model.predict(&[x]).unwrap() - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let (cohort, mut pseudo, t) = constant_pseudo_cohort(30, 0.2);
        let config = RegressorConfig::Forest {
            n_trees: 12,
            mtry: None,
            min_leaf_weight: Some(1.0),
            min_leaf_samples: 2,
            max_depth: None,
            bootstrap: true,
        };
        let base = fit_cate(&cohort, t, &pseudo, None, &config, 9).unwrap();
        // Append junk rows with zero learner weight.
        for i in 0..10 {
            pseudo.rows.push(PseudoRow {
                index: i,
                arm: 1,
                y_star: 500.0,
                w_m: 0.0,
                w_c: 1.0,
            });
        }
        let with_zeros = fit_cate(&cohort, t, &pseudo, None, &config, 9).unwrap();
        for x in [-1.0, 0.5, 1.8] {
            assert_eq!(
                base.predict(&[x]).unwrap(),
                with_zeros.predict(&[x]).unwrap()
            );
        }
    }

    #[test]
    fn predictions_clamped_to_unit_interval() {
        let (cohort, pseudo, t) = constant_pseudo_cohort(20, 3.0);
        let model = fit_cate(&cohort, t, &pseudo, None, &RegressorConfig::Ridge { alpha: 1e-9 }, 1).unwrap();
        assert_eq!(model.predict(&[0.3]).unwrap(), 1.0);
    }

    #[test]
    fn x_learner_requires_propensity_and_both_arms() {
        let (cohort, mut pseudo, t) = constant_pseudo_cohort(20, 0.1);
        pseudo.learner = LearnerKind::X;
        let err = fit_cate(&cohort, t, &pseudo, None, &RegressorConfig::Ridge { alpha: 1e-6 }, 1).unwrap_err();
        assert!(matches!(err, SurvError::MissingNuisance { .. }));
        pseudo.rows.retain(|r| r.arm == 1);
        let err = fit_cate(&cohort, t, &pseudo, None, &RegressorConfig::Ridge { alpha: 1e-6 }, 1).unwrap_err();
        assert!(matches!(err, SurvError::EmptyArm { .. }));
    }

    #[test]
    fn all_weights_zero_is_an_error() {
        let (cohort, mut pseudo, t) = constant_pseudo_cohort(10, 0.1);
        for r in pseudo.rows.iter_mut() {
            r.w_m = 0.0;
        }
        assert!(matches!(
            fit_cate(&cohort, t, &pseudo, None, &RegressorConfig::Ridge { alpha: 1e-6 }, 1),
            Err(SurvError::AllWeightsZero)
        ));
    }
}
