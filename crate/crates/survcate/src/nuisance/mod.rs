//! Step-1 nuisance estimation: conditional survival functions, propensity
//! scores, the censoring distribution, and their per-subject assembly into
//! the bundle every meta-learner consumes.

pub mod km;
pub mod weibull;

pub use km::{fit_kaplan_meier, CensoringModel, KaplanMeierCurve};
pub use weibull::{fit_weibull_aft, WeibullAftModel, WeibullFitInfo};

use serde::{Deserialize, Serialize};

use crate::data::{censoring_min_time, complete_case_view, Cohort, CompleteCaseView, TargetTime};
use crate::error::SurvError;
use crate::forest::{
    ColMatrix, PropensityForest, PropensityForestParams, SurvivalForest, SurvivalForestParams,
};
use crate::rng::{derive_seed, salt};
use crate::Result;

/// Common interface of the fitted conditional-survival estimators.
pub trait SurvivalEstimator {
    /// `S(t|x)`; a probability in `[0, 1]`, nonincreasing in `t`.
    fn survival(&self, x: &[f64], t: f64) -> f64;
}

impl SurvivalEstimator for SurvivalForest {
    fn survival(&self, x: &[f64], t: f64) -> f64 {
        SurvivalForest::survival(self, x, t)
    }
}

impl SurvivalEstimator for WeibullAftModel {
    fn survival(&self, x: &[f64], t: f64) -> f64 {
        WeibullAftModel::survival(self, t, x)
    }
}

impl SurvivalEstimator for KaplanMeierCurve {
    fn survival(&self, _x: &[f64], t: f64) -> f64 {
        self.survival_at(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub survival_forest: SurvivalForestParams,
    pub propensity_forest: PropensityForestParams,
    /// Censoring KM stratified by treatment arm.
    pub censor_stratify_by_arm: bool,
    /// Cap on inverse-probability-of-censoring weights.
    pub weight_cap: f64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            survival_forest: SurvivalForestParams::default(),
            propensity_forest: PropensityForestParams::default(),
            censor_stratify_by_arm: true,
            weight_cap: 20.0,
        }
    }
}

/// Counters surfaced alongside a fitted bundle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NuisanceDiagnostics {
    pub n: usize,
    pub n_complete: usize,
    /// Propensity predictions pulled back to the clip bounds.
    pub propensity_clip_count: usize,
    /// Censoring weights truncated at the cap (including `G = 0` rows).
    pub weight_cap_count: usize,
}

/// Per-subject nuisance values at the target time.
///
/// `censor_weight[i]` is `Some` exactly for complete-case rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceBundle {
    pub t_star: f64,
    pub treatment: Vec<u8>,
    pub propensity: Vec<f64>,
    pub surv0: Vec<f64>,
    pub surv1: Vec<f64>,
    pub surv_pooled: Vec<f64>,
    pub censor_survival: Vec<Option<f64>>,
    pub censor_weight: Vec<Option<f64>>,
    pub view: CompleteCaseView,
    pub diagnostics: NuisanceDiagnostics,
}

impl NuisanceBundle {
    /// Assembles a bundle from externally supplied per-subject values (used
    /// for oracle-injection studies). Validates ranges and computes capped
    /// censoring weights from `censor_survival`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        t_star: f64,
        treatment: Vec<u8>,
        propensity: Vec<f64>,
        surv0: Vec<f64>,
        surv1: Vec<f64>,
        surv_pooled: Vec<f64>,
        censor_survival: Vec<Option<f64>>,
        view: CompleteCaseView,
        weight_cap: f64,
    ) -> Result<Self> {
        let n = propensity.len();
        if [surv0.len(), surv1.len(), surv_pooled.len(), censor_survival.len(), treatment.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(SurvError::InvalidArgument(
                "nuisance bundle: component length mismatch".into(),
            ));
        }
        for i in 0..n {
            for (name, v) in [
                ("propensity", propensity[i]),
                ("surv0", surv0[i]),
                ("surv1", surv1[i]),
                ("surv_pooled", surv_pooled[i]),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SurvError::InvalidArgument(format!(
                        "nuisance bundle: {name}[{i}] = {v} outside [0, 1]"
                    )));
                }
            }
        }
        let mut diagnostics = NuisanceDiagnostics {
            n,
            n_complete: view.n_complete,
            ..Default::default()
        };
        let mut censor_weight = vec![None; n];
        for &i in &view.indices {
            let g = censor_survival[i].ok_or_else(|| {
                SurvError::InvalidArgument(format!(
                    "nuisance bundle: complete-case row {i} lacks censoring survival"
                ))
            })?;
            let raw = if g > 0.0 { 1.0 / g } else { f64::INFINITY };
            let w = if raw > weight_cap {
                diagnostics.weight_cap_count += 1;
                weight_cap
            } else {
                raw.max(1.0)
            };
            censor_weight[i] = Some(w);
        }
        Ok(Self {
            t_star,
            treatment,
            propensity,
            surv0,
            surv1,
            surv_pooled,
            censor_survival,
            censor_weight,
            view,
            diagnostics,
        })
    }
}

/// The fitted step-1 models together with their per-subject bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub surv0: SurvivalForest,
    pub surv1: SurvivalForest,
    pub surv_pooled: SurvivalForest,
    pub propensity: PropensityForest,
    pub censoring: CensoringModel,
    pub bundle: NuisanceBundle,
}

/// Fits all step-1 nuisances on the cohort and evaluates them per subject.
///
/// Arm-specific survival forests are trained on each arm's full censored
/// data and predict on everyone, so counterfactual survival probabilities
/// are available for the X- and DR-learners. Censoring weights are computed
/// only for complete-case rows at `min(U, t*)` and capped; cap engagements
/// are counted in the diagnostics.
pub fn build_nuisance_bundle(
    cohort: &Cohort,
    t: TargetTime,
    config: &NuisanceConfig,
    seed: u64,
) -> Result<NuisanceFit> {
    if !cohort.has_both_arms() {
        return Err(SurvError::SingleArm);
    }
    if !(config.weight_cap >= 1.0) {
        return Err(SurvError::InvalidArgument(format!(
            "censoring weight cap must be >= 1, got {}",
            config.weight_cap
        )));
    }
    let dm = cohort.design_matrix();
    let x = ColMatrix::from_design(&dm);
    let times = cohort.times();
    let events = cohort.events();
    let treatments = cohort.treatments();
    let n = cohort.n();

    let arm_fit = |arm: u8, arm_seed: u64| -> Result<SurvivalForest> {
        let idx = cohort.arm_indices(arm);
        if idx.is_empty() {
            return Err(SurvError::EmptyArm {
                arm,
                context: "arm-specific survival forest".into(),
            });
        }
        let rows: Vec<f64> = idx.iter().flat_map(|&i| dm.row(i).to_vec()).collect();
        let sub = ColMatrix::from_rows(&rows, idx.len(), dm.n_cols(), dm.info.col_names.clone());
        let t_sub: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let e_sub: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        SurvivalForest::fit(&sub, &t_sub, &e_sub, &config.survival_forest, arm_seed)
    };

    let model0 = arm_fit(0, derive_seed(seed, salt::NUIS_SURV0, 0))?;
    let model1 = arm_fit(1, derive_seed(seed, salt::NUIS_SURV1, 0))?;
    let pooled = SurvivalForest::fit(
        &x,
        &times,
        &events,
        &config.survival_forest,
        derive_seed(seed, salt::NUIS_POOLED, 0),
    )?;
    let propensity = PropensityForest::fit(
        &x,
        &treatments,
        &config.propensity_forest,
        derive_seed(seed, salt::NUIS_PROPENSITY, 0),
    )?;
    let censoring = CensoringModel::fit(cohort, config.censor_stratify_by_arm)?;

    let view = complete_case_view(cohort, t);
    let t_star = t.value();
    let mut diagnostics = NuisanceDiagnostics {
        n,
        n_complete: view.n_complete,
        ..Default::default()
    };

    let clip = propensity.clip;
    let mut e_hat = Vec::with_capacity(n);
    let mut s0 = Vec::with_capacity(n);
    let mut s1 = Vec::with_capacity(n);
    let mut sp = Vec::with_capacity(n);
    for i in 0..n {
        let row = dm.row(i);
        let raw = propensity.predict_raw(row);
        if raw < clip || raw > 1.0 - clip {
            diagnostics.propensity_clip_count += 1;
        }
        e_hat.push(raw.clamp(clip, 1.0 - clip));
        s0.push(model0.survival(row, t_star));
        s1.push(model1.survival(row, t_star));
        sp.push(pooled.survival(row, t_star));
    }

    let mut censor_survival = vec![None; n];
    let mut censor_weight = vec![None; n];
    for &i in &view.indices {
        let rec = &cohort.records()[i];
        let tmin = censoring_min_time(rec, t);
        let g = censoring.survival_beyond(tmin, rec.treatment);
        censor_survival[i] = Some(g);
        let raw = if g > 0.0 { 1.0 / g } else { f64::INFINITY };
        let w = if raw > config.weight_cap {
            diagnostics.weight_cap_count += 1;
            config.weight_cap
        } else {
            raw.max(1.0)
        };
        censor_weight[i] = Some(w);
    }

    let bundle = NuisanceBundle {
        t_star,
        treatment: treatments.clone(),
        propensity: e_hat,
        surv0: s0,
        surv1: s1,
        surv_pooled: sp,
        censor_survival,
        censor_weight,
        view,
        diagnostics,
    };
    Ok(NuisanceFit {
        surv0: model0,
        surv1: model1,
        surv_pooled: pooled,
        propensity,
        censoring,
        bundle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateSchema, SurvivalRecord};
    use rand::Rng;

    fn sim_cohort(n: usize, censor_scale: Option<f64>, seed: u64) -> Cohort {
        let schema = CovariateSchema::continuous(&["x1", "x2"]).unwrap();
        let mut rng = crate::rng::seeded(seed);
        let mut records = Vec::new();
        for _ in 0..n {
            let x1: f64 = rng.sample(rand_distr::StandardNormal);
            let x2: f64 = rng.sample(rand_distr::StandardNormal);
            let a = rng.gen_bool(0.5) as u8;
            let u: f64 = rng.gen_range(1e-12..1.0);
            let t = 10.0 * (-u.ln() / (0.3 * x1).exp()).powf(0.5);
            let (obs, event) = match censor_scale {
                Some(s) => {
                    let c: f64 = -s * rng.gen_range(1e-12..1.0f64).ln();
                    (t.min(c), t < c)
                }
                None => (t, true),
            };
            records.push(SurvivalRecord::new(obs, event, a, vec![x1, x2]));
        }
        Cohort::new(schema, records).unwrap()
    }

    fn small_config() -> NuisanceConfig {
        NuisanceConfig {
            survival_forest: SurvivalForestParams {
                n_trees: 40,
                ..Default::default()
            },
            propensity_forest: PropensityForestParams {
                n_trees: 40,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn no_censoring_gives_unit_weights() {
        let cohort = sim_cohort(150, None, 1);
        let t = TargetTime::new(8.0).unwrap();
        let fit = build_nuisance_bundle(&cohort, t, &small_config(), 5).unwrap();
        assert_eq!(fit.bundle.view.n_complete, 150);
        for &i in &fit.bundle.view.indices {
            assert_eq!(fit.bundle.censor_weight[i], Some(1.0));
        }
        assert_eq!(fit.bundle.diagnostics.weight_cap_count, 0);
    }

    #[test]
    fn bundle_values_obey_contracts() {
        let cohort = sim_cohort(250, Some(15.0), 2);
        let t = TargetTime::new(7.0).unwrap();
        let fit = build_nuisance_bundle(&cohort, t, &small_config(), 11).unwrap();
        let b = &fit.bundle;
        for i in 0..cohort.n() {
            assert!((0.0..=1.0).contains(&b.surv0[i]));
            assert!((0.0..=1.0).contains(&b.surv1[i]));
            assert!((0.0..=1.0).contains(&b.surv_pooled[i]));
            assert!(b.propensity[i] >= 0.01 && b.propensity[i] <= 0.99);
            if let Some(w) = b.censor_weight[i] {
                assert!((1.0..=20.0).contains(&w));
            }
        }
        let n_some = b.censor_weight.iter().filter(|w| w.is_some()).count();
        assert_eq!(n_some, b.view.n_complete);
        assert!(b.view.n_complete < cohort.n());
    }

    #[test]
    fn ipcw_self_normalizes_within_arms() {
        // Mean over arm subjects of w^C * I(complete) should be near 1.
        for seed in 0..5u64 {
            let cohort = sim_cohort(800, Some(18.0), crate::rng::derive_seed(7, 1, seed));
            let t = TargetTime::new(6.0).unwrap();
            let fit = build_nuisance_bundle(&cohort, t, &small_config(), seed).unwrap();
            for arm in 0..2u8 {
                let idx = cohort.arm_indices(arm);
                let total: f64 = idx
                    .iter()
                    .map(|&i| fit.bundle.censor_weight[i].unwrap_or(0.0))
                    .sum();
                let mean = total / idx.len() as f64;
                assert!((mean - 1.0).abs() < 0.1, "seed {seed} arm {arm}: mean {mean}");
            }
        }
    }

    #[test]
    fn oracle_injection_via_from_parts() {
        let cohort = sim_cohort(50, None, 3);
        let t = TargetTime::new(8.0).unwrap();
        let view = complete_case_view(&cohort, t);
        let n = cohort.n();
        let bundle = NuisanceBundle::from_parts(
            8.0,
            cohort.treatments(),
            vec![0.5; n],
            vec![0.6; n],
            vec![0.7; n],
            vec![0.65; n],
            vec![Some(1.0); n],
            view,
            20.0,
        )
        .unwrap();
        assert_eq!(bundle.diagnostics.n_complete, n);
        assert!(bundle.censor_weight.iter().all(|w| *w == Some(1.0)));
        // Out-of-range probability rejected.
        let view = complete_case_view(&cohort, t);
        assert!(NuisanceBundle::from_parts(
            8.0,
            cohort.treatments(),
            vec![1.5; n],
            vec![0.6; n],
            vec![0.7; n],
            vec![0.65; n],
            vec![Some(1.0); n],
            view,
            20.0,
        )
        .is_err());
    }
}
