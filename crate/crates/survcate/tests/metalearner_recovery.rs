//! Oracle-injection and cross-fitting checks for the meta-learners.

use survcate::data::{complete_case_view, Cohort, CovariateSchema, SurvivalRecord, TargetTime};
use survcate::forest::{PropensityForest, PropensityForestParams, SurvivalForestParams};
use survcate::interpret::CatePredictor;
use survcate::metalearners::{
    build_pseudo_outcomes, cross_fit_cate, fit_cate, LearnerKind, PipelineConfig, RegressorConfig,
};
use survcate::nuisance::{NuisanceBundle, NuisanceConfig};
use survcate::simbench::{
    calibrate_censoring, oracle_cate, oracle_survival, simulate_cohort, BinaryCoding, Design,
    Scenario, ScenarioSpec, SimulatedCohort,
};
use survcate::subgroup::cate_percentile;

fn small_forest(n_trees: usize) -> RegressorConfig {
    RegressorConfig::Forest {
        n_trees,
        mtry: None,
        min_leaf_weight: None,
        min_leaf_samples: 5,
        max_depth: None,
        bootstrap: true,
    }
}

fn light_pipeline(n_trees: usize) -> PipelineConfig {
    PipelineConfig {
        nuisance: NuisanceConfig {
            survival_forest: SurvivalForestParams {
                n_trees,
                ..Default::default()
            },
            propensity_forest: PropensityForestParams {
                n_trees,
                ..Default::default()
            },
            ..Default::default()
        },
        regressor: small_forest(n_trees),
        ..Default::default()
    }
}

/// Bundle carrying the data-generating truth instead of estimates.
fn oracle_bundle(sim: &SimulatedCohort, t_star: f64, censor_rate: f64) -> NuisanceBundle {
    let n = sim.n();
    let view = complete_case_view(&sim.cohort, TargetTime::new(t_star).unwrap());
    let mut surv0 = Vec::with_capacity(n);
    let mut surv1 = Vec::with_capacity(n);
    let mut pooled = Vec::with_capacity(n);
    for i in 0..n {
        let x = sim.covariate_row(i);
        let s0 = oracle_survival(sim.scenario, 0, x, t_star);
        let s1 = oracle_survival(sim.scenario, 1, x, t_star);
        let e = sim.true_propensity[i];
        surv0.push(s0);
        surv1.push(s1);
        pooled.push(e * s1 + (1.0 - e) * s0);
    }
    let censor_survival: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let r = &sim.cohort.records()[i];
            if r.observed_time >= t_star || r.event {
                let tmin = r.observed_time.min(t_star);
                Some((-censor_rate * tmin).exp())
            } else {
                None
            }
        })
        .collect();
    NuisanceBundle::from_parts(
        t_star,
        sim.cohort.treatments(),
        sim.true_propensity.clone(),
        surv0,
        surv1,
        pooled,
        censor_survival,
        view,
        20.0,
    )
    .unwrap()
}

#[test]
fn true_nuisances_recover_cate_for_every_learner() {
    let spec = ScenarioSpec::new(Scenario::S1, Design::Rct, 5000, 1, 42);
    let rate = calibrate_censoring(
        Scenario::S1,
        Design::Rct,
        BinaryCoding::PlusMinusOne,
        0.30,
        42,
    )
    .unwrap();
    let sim = simulate_cohort(&spec, 5000, rate, 42).unwrap();
    let t_star = cate_percentile(&sim.cohort.times(), 0.5).unwrap();
    let t = TargetTime::new(t_star).unwrap();
    let bundle = oracle_bundle(&sim, t_star, rate);
    let tau_true = sim.true_cate_at(t_star);
    let mean_true = tau_true.iter().sum::<f64>() / tau_true.len() as f64;

    let dm = sim.cohort.design_matrix();
    let x = survcate::forest::ColMatrix::from_design(&dm);
    let propensity = PropensityForest::fit(
        &x,
        &sim.cohort.treatments(),
        &PropensityForestParams {
            n_trees: 100,
            ..Default::default()
        },
        7,
    )
    .unwrap();

    for learner in LearnerKind::ALL {
        let pseudo = build_pseudo_outcomes(&bundle, learner).unwrap();
        let model = fit_cate(&sim.cohort, t, &pseudo, Some(&propensity), &small_forest(150), 11).unwrap();
        let mean_pred: f64 = (0..sim.n())
            .map(|i| model.predict(sim.covariate_row(i)).unwrap())
            .sum::<f64>()
            / sim.n() as f64;
        let gap = (mean_pred - mean_true).abs();
        assert!(gap < 0.03, "{learner}: |mean prediction - mean truth| = {gap:.4}");
    }
}

#[test]
fn x_learner_blend_stays_between_arm_components() {
    let spec = ScenarioSpec::new(Scenario::S1, Design::BalancedObs, 600, 1, 3);
    let rate = 0.03;
    let sim = simulate_cohort(&spec, 600, rate, 3).unwrap();
    let t_star = cate_percentile(&sim.cohort.times(), 0.5).unwrap();
    let t = TargetTime::new(t_star).unwrap();
    let est = survcate::metalearners::estimate_cate(&sim.cohort, t, LearnerKind::X, &light_pipeline(50), 5).unwrap();
    let dm = sim.cohort.design_matrix();
    for i in 0..100 {
        let row = dm.row(i);
        let (t0, t1, e) = est.model.x_components(row).unwrap();
        let blend = e * t0 + (1.0 - e) * t1;
        let lo = t0.min(t1) - 1e-12;
        let hi = t0.max(t1) + 1e-12;
        assert!(blend >= lo && blend <= hi);
        assert_eq!(est.model.predict_design(row), blend.clamp(-1.0, 1.0));
    }
}

#[test]
fn constant_covariate_leaves_cate_predictions_unchanged() {
    let spec = ScenarioSpec::new(Scenario::S1, Design::Rct, 400, 1, 9);
    let sim = simulate_cohort(&spec, 400, 0.03, 9).unwrap();
    let t_star = cate_percentile(&sim.cohort.times(), 0.5).unwrap();
    let t = TargetTime::new(t_star).unwrap();

    let est_base = survcate::metalearners::estimate_cate(&sim.cohort, t, LearnerKind::Dr, &light_pipeline(40), 21).unwrap();

    // Same cohort with an appended all-constant covariate.
    let mut names: Vec<&str> = vec!["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10"];
    names.push("konst");
    let schema = {
        use survcate::data::CovariateKind;
        let mut entries: Vec<(String, CovariateKind)> = Vec::new();
        for (j, n) in names.iter().enumerate() {
            let kind = if j < 5 || j == 10 {
                CovariateKind::Continuous
            } else {
                CovariateKind::Binary
            };
            entries.push((n.to_string(), kind));
        }
        CovariateSchema::new(entries).unwrap()
    };
    let records: Vec<SurvivalRecord> = sim
        .cohort
        .records()
        .iter()
        .map(|r| {
            let mut cov = r.covariates.clone();
            cov.push(3.25);
            SurvivalRecord::new(r.observed_time, r.event, r.treatment, cov)
        })
        .collect();
    let wide = Cohort::new(schema, records).unwrap();
    let est_wide = survcate::metalearners::estimate_cate(&wide, t, LearnerKind::Dr, &light_pipeline(40), 21).unwrap();

    for i in (0..400).step_by(17) {
        let base_row = sim.covariate_row(i);
        let mut wide_row = base_row.to_vec();
        wide_row.push(3.25);
        assert_eq!(
            est_base.model.predict(base_row).unwrap(),
            est_wide.model.predict(&wide_row).unwrap(),
            "row {i}"
        );
    }
}

#[test]
fn leave_one_out_cross_fit_on_toy_cohort() {
    let schema = CovariateSchema::continuous(&["x"]).unwrap();
    let records = vec![
        SurvivalRecord::new(2.0, true, 0, vec![0.1]),
        SurvivalRecord::new(4.0, true, 0, vec![0.9]),
        SurvivalRecord::new(6.0, true, 0, vec![0.4]),
        SurvivalRecord::new(1.0, true, 1, vec![0.6]),
        SurvivalRecord::new(3.0, true, 1, vec![0.2]),
        SurvivalRecord::new(5.0, true, 1, vec![0.8]),
    ];
    let cohort = Cohort::new(schema, records).unwrap();
    let t = TargetTime::new(3.5).unwrap();
    let mut config = light_pipeline(5);
    config.regressor = RegressorConfig::Ridge { alpha: 1e-6 };
    let result = cross_fit_cate(&cohort, t, LearnerKind::M, 6, &config, 17).unwrap();
    assert_eq!(result.tau_hat.len(), 6);
    assert!(result.tau_hat.iter().all(|v| v.is_finite()));
    assert_eq!(result.models.len(), 6);
    // Folds partition the rows: each of the 6 folds holds exactly one row.
    let mut counts = [0usize; 6];
    for &f in &result.fold {
        counts[f] += 1;
    }
    assert!(counts.iter().all(|&c| c == 1));
}

#[test]
fn cross_fit_out_of_fold_mean_tracks_truth() {
    let spec = ScenarioSpec::new(Scenario::S1, Design::Rct, 800, 1, 31);
    let rate = 0.04;
    let sim = simulate_cohort(&spec, 800, rate, 31).unwrap();
    let t_star = cate_percentile(&sim.cohort.times(), 0.5).unwrap();
    let t = TargetTime::new(t_star).unwrap();
    let result = cross_fit_cate(&sim.cohort, t, LearnerKind::Dr, 5, &light_pipeline(60), 13).unwrap();
    let tau_true = sim.true_cate_at(t_star);
    let mean_true = tau_true.iter().sum::<f64>() / 800.0;
    let mean_oof = result.tau_hat.iter().sum::<f64>() / 800.0;
    assert!(
        (mean_oof - mean_true).abs() < 0.1,
        "oof mean {mean_oof:.3} vs truth {mean_true:.3}"
    );
    // Every fold contributed and the assignment is a partition.
    let mut seen = vec![0usize; 5];
    for &f in &result.fold {
        seen[f] += 1;
    }
    assert!(seen.iter().all(|&c| c > 0));
    assert_eq!(seen.iter().sum::<usize>(), 800);
}

#[test]
fn cate_model_survives_json_roundtrip() {
    let spec = ScenarioSpec::new(Scenario::S1, Design::Rct, 300, 1, 55);
    let sim = simulate_cohort(&spec, 300, 0.04, 55).unwrap();
    let t_star = cate_percentile(&sim.cohort.times(), 0.5).unwrap();
    let t = TargetTime::new(t_star).unwrap();
    let est = survcate::metalearners::estimate_cate(&sim.cohort, t, LearnerKind::R, &light_pipeline(25), 2).unwrap();
    let json = serde_json::to_string(&est.model).unwrap();
    let back: survcate::metalearners::CateModel = serde_json::from_str(&json).unwrap();
    for i in (0..300).step_by(23) {
        let x = sim.covariate_row(i);
        assert_eq!(est.model.predict(x).unwrap(), back.predict(x).unwrap());
        assert_eq!(est.model.predict_row(x), back.predict_row(x));
    }
}
