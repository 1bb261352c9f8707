//! Kaplan-Meier product-limit estimation and the flipped-role censoring fit.

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::SurvError;
use crate::Result;

/// A fitted product-limit curve.
///
/// `survival[k]` is the step value just after `event_times[k]`; the curve is
/// right-continuous, starts at 1 and is nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub n_at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
}

impl KaplanMeierCurve {
    /// Right-continuous evaluation: the step value at the largest event
    /// time `<= t`, or 1 before the first event.
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.event_times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// Left limit `S(t-)`: the product over event times strictly before `t`.
    pub fn survival_before(&self, t: f64) -> f64 {
        match self.event_times.partition_point(|&s| s < t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }
}

/// Standard product-limit estimator over `(times, events)`.
pub fn fit_kaplan_meier(times: &[f64], events: &[bool]) -> Result<KaplanMeierCurve> {
    if times.is_empty() {
        return Err(SurvError::EmptyInput("kaplan-meier requires at least one observation"));
    }
    if times.len() != events.len() {
        return Err(SurvError::InvalidArgument(
            "times and events must have equal length".into(),
        ));
    }
    if times.iter().any(|&t| !t.is_finite() || t < 0.0) {
        return Err(SurvError::InvalidArgument(
            "kaplan-meier times must be nonnegative reals".into(),
        ));
    }
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut event_times = Vec::new();
    let mut survival = Vec::new();
    let mut n_at_risk = Vec::new();
    let mut n_events = Vec::new();

    let mut s = 1.0;
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let at_risk = n - i;
        let mut d = 0usize;
        let mut j = i;
        while j < n && times[order[j]] == t {
            if events[order[j]] {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            event_times.push(t);
            survival.push(s);
            n_at_risk.push(at_risk);
            n_events.push(d);
        }
        i = j;
    }
    Ok(KaplanMeierCurve {
        event_times,
        survival,
        n_at_risk,
        n_events,
    })
}

/// Censoring-distribution estimator: KM on `(U, 1 - delta)`, optionally
/// stratified by treatment arm.
///
/// `G(t|A)` estimates `P(C > t | A)`. Following the strict inequality in the
/// weight definition, [`survival_beyond`](CensoringModel::survival_beyond)
/// evaluates the curve by its left limit at the query time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CensoringModel {
    pub stratified: bool,
    pub pooled: Option<KaplanMeierCurve>,
    pub by_arm: Option<[KaplanMeierCurve; 2]>,
}

impl CensoringModel {
    pub fn fit(cohort: &Cohort, stratify_by_arm: bool) -> Result<Self> {
        if stratify_by_arm {
            let mut arms = Vec::with_capacity(2);
            for arm in 0u8..2 {
                let idx = cohort.arm_indices(arm);
                if idx.is_empty() {
                    return Err(SurvError::EmptyArm {
                        arm,
                        context: "censoring model stratified by arm".into(),
                    });
                }
                let times: Vec<f64> = idx.iter().map(|&i| cohort.records()[i].observed_time).collect();
                let flipped: Vec<bool> = idx.iter().map(|&i| !cohort.records()[i].event).collect();
                arms.push(fit_kaplan_meier(&times, &flipped)?);
            }
            let by_arm: [KaplanMeierCurve; 2] = [arms.remove(0), arms.remove(0)];
            Ok(Self {
                stratified: true,
                pooled: None,
                by_arm: Some(by_arm),
            })
        } else {
            let times = cohort.times();
            let flipped: Vec<bool> = cohort.events().iter().map(|&e| !e).collect();
            Ok(Self {
                stratified: false,
                pooled: Some(fit_kaplan_meier(&times, &flipped)?),
                by_arm: None,
            })
        }
    }

    /// Estimated `P(C > t | arm)` via the left limit of the censoring KM.
    pub fn survival_beyond(&self, t: f64, arm: u8) -> f64 {
        if self.stratified {
            self.by_arm.as_ref().expect("stratified model")[arm as usize].survival_before(t)
        } else {
            self.pooled.as_ref().expect("pooled model").survival_before(t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateSchema, SurvivalRecord};

    #[test]
    fn no_censoring_equals_empirical_survival() {
        let km = fit_kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(km.event_times, vec![1.0, 2.0, 3.0]);
        assert!((km.survival_at(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((km.survival_at(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.survival_at(3.0), 0.0);
        assert_eq!(km.survival_at(0.5), 1.0);
    }

    #[test]
    fn hand_product_limit_with_censoring() {
        // events at 1 and 3, censored at 2: S(1) = 2/3, S(2) = 2/3, S(3) = 0.
        let km = fit_kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert!((km.survival_at(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((km.survival_at(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.survival_at(3.0), 0.0);
    }

    #[test]
    fn single_censored_observation_stays_at_one() {
        let km = fit_kaplan_meier(&[4.2], &[false]).unwrap();
        assert!(km.event_times.is_empty());
        assert_eq!(km.survival_at(0.0), 1.0);
        assert_eq!(km.survival_at(100.0), 1.0);
    }

    #[test]
    fn tied_event_times_group_into_one_step() {
        let km = fit_kaplan_meier(&[2.0, 2.0, 5.0, 5.0], &[true, true, true, false]).unwrap();
        assert_eq!(km.event_times, vec![2.0, 5.0]);
        assert_eq!(km.n_events, vec![2, 1]);
        assert_eq!(km.n_at_risk, vec![4, 2]);
        assert!((km.survival_at(2.0) - 0.5).abs() < 1e-15);
        assert!((km.survival_at(5.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn left_limit_excludes_the_step_at_t() {
        let km = fit_kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(km.survival_before(1.0), 1.0);
        assert!((km.survival_before(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((km.survival_at(2.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(fit_kaplan_meier(&[], &[]).is_err());
    }

    fn cohort(rows: &[(f64, bool, u8)]) -> Cohort {
        let schema = CovariateSchema::continuous(&["x"]).unwrap();
        Cohort::new(
            schema,
            rows.iter()
                .map(|&(u, e, a)| SurvivalRecord::new(u, e, a, vec![0.0]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn censoring_fit_flips_roles_exactly() {
        let rows = [(1.0, true, 0), (2.0, false, 0), (3.0, true, 0), (4.0, false, 0)];
        let model = CensoringModel::fit(&cohort(&rows), false).unwrap();
        let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let flipped: Vec<bool> = rows.iter().map(|r| !r.1).collect();
        let direct = fit_kaplan_meier(&times, &flipped).unwrap();
        assert_eq!(model.pooled.as_ref().unwrap(), &direct);
    }

    #[test]
    fn no_censoring_gives_unit_weights() {
        let rows = [(1.0, true, 0), (2.0, true, 1), (3.0, true, 0), (4.0, true, 1)];
        let model = CensoringModel::fit(&cohort(&rows), true).unwrap();
        for arm in 0..2u8 {
            for t in [0.5, 1.0, 2.5, 3.9] {
                assert_eq!(model.survival_beyond(t, arm), 1.0);
            }
        }
    }

    #[test]
    fn stratified_fit_requires_both_arms() {
        let rows = [(1.0, true, 0), (2.0, false, 0)];
        assert!(CensoringModel::fit(&cohort(&rows), true).is_err());
        assert!(CensoringModel::fit(&cohort(&rows), false).is_ok());
    }
}
