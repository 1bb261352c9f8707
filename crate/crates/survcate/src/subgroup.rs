//! Data-adaptive subgroup discovery: the mean-treatment-difference (MTD)
//! curve over CATE percentiles.
//!
//! For a percentile threshold `tau_q`, the subgroup is every subject with
//! predicted CATE at or above it; the MTD is the within-subgroup
//! Kaplan-Meier survival difference between arms at `t*`, computed on the
//! full censored data (the KM risk sets handle censoring, unlike the
//! complete-case loss used for fitting).

use serde::{Deserialize, Serialize};

use crate::data::{Cohort, TargetTime};
use crate::error::SurvError;
use crate::nuisance::km::fit_kaplan_meier;
use crate::Result;

/// Inverse-ECDF (lower) empirical quantile: the smallest sample value whose
/// ECDF reaches `q`. With membership defined by `>=`, this guarantees the
/// subgroup holds at least `(1-q) * n` subjects.
pub fn cate_percentile(tau_hat: &[f64], q: f64) -> Result<f64> {
    if tau_hat.is_empty() {
        return Err(SurvError::EmptyInput("quantile of an empty prediction vector"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(SurvError::InvalidArgument(format!(
            "percentile must lie in (0, 1), got {q}"
        )));
    }
    let mut sorted = tau_hat.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).max(1);
    Ok(sorted[rank - 1])
}

/// One evaluated point of an MTD curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtdPoint {
    /// Subgroup fraction `1 - q`.
    pub one_minus_q: f64,
    pub threshold: f64,
    pub n_treated: usize,
    pub n_control: usize,
    /// `S1(t*) - S0(t*)` within the subgroup; `None` when an arm is empty.
    pub mtd: Option<f64>,
    /// Reason a point is undefined.
    pub reason: Option<String>,
    /// `mtd - overall_mtd >= margin`.
    pub beneficial: bool,
}

/// The MTD curve over a percentile grid plus the all-subjects reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtdCurve {
    pub t_star: f64,
    pub points: Vec<MtdPoint>,
    pub overall_mtd: f64,
    /// Margin above `overall_mtd` marking a beneficial subgroup.
    pub margin: f64,
}

/// Subgroup KM difference at `t*` for subjects with `tau_hat >= threshold`.
fn mtd_for_threshold(
    cohort: &Cohort,
    tau_hat: &[f64],
    threshold: f64,
    t_star: f64,
) -> (usize, usize, std::result::Result<f64, String>) {
    let members: Vec<usize> = (0..cohort.n()).filter(|&i| tau_hat[i] >= threshold).collect();
    let mut n_arm = [0usize; 2];
    for &i in &members {
        n_arm[cohort.records()[i].treatment as usize] += 1;
    }
    if n_arm[0] == 0 || n_arm[1] == 0 {
        let arm = if n_arm[1] == 0 { 1 } else { 0 };
        return (n_arm[1], n_arm[0], Err(format!("arm {arm} empty in subgroup")));
    }
    let mut surv = [1.0f64; 2];
    for arm in 0..2u8 {
        let times: Vec<f64> = members
            .iter()
            .filter(|&&i| cohort.records()[i].treatment == arm)
            .map(|&i| cohort.records()[i].observed_time)
            .collect();
        let events: Vec<bool> = members
            .iter()
            .filter(|&&i| cohort.records()[i].treatment == arm)
            .map(|&i| cohort.records()[i].event)
            .collect();
        match fit_kaplan_meier(&times, &events) {
            Ok(km) => surv[arm as usize] = km.survival_at(t_star),
            Err(e) => return (n_arm[1], n_arm[0], Err(e.to_string())),
        }
    }
    (n_arm[1], n_arm[0], Ok(surv[1] - surv[0]))
}

/// MTD at one percentile; errors when the subgroup misses an arm entirely,
/// matching the single-point contract (curve evaluation keeps going and
/// records the reason instead).
pub fn mtd_at(
    cohort: &Cohort,
    tau_hat: &[f64],
    q: f64,
    t: TargetTime,
) -> Result<(f64, usize, usize)> {
    check_lengths(cohort, tau_hat)?;
    let threshold = cate_percentile(tau_hat, q)?;
    let (n1, n0, res) = mtd_for_threshold(cohort, tau_hat, threshold, t.value());
    match res {
        Ok(v) => Ok((v, n1, n0)),
        Err(reason) => Err(SurvError::InvalidArgument(format!(
            "subgroup at q = {q} is undefined: {reason}"
        ))),
    }
}

/// Evaluates the MTD curve on a percentile grid (descending `q`, e.g.
/// 0.9, 0.8, ..., 0.1). Undefined points are retained with their reason.
pub fn mtd_curve(
    cohort: &Cohort,
    tau_hat: &[f64],
    grid: &[f64],
    t: TargetTime,
    margin: f64,
) -> Result<MtdCurve> {
    check_lengths(cohort, tau_hat)?;
    if grid.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(SurvError::InvalidArgument(
            "percentile grid values must lie in (0, 1)".into(),
        ));
    }
    let t_star = t.value();
    let (o1, o0, overall) = mtd_for_threshold(cohort, tau_hat, f64::NEG_INFINITY, t_star);
    let overall_mtd = overall.map_err(|reason| SurvError::InvalidArgument(format!(
        "overall MTD undefined: {reason} ({o1} treated, {o0} control)"
    )))?;

    let mut points = Vec::with_capacity(grid.len());
    for &q in grid {
        let threshold = cate_percentile(tau_hat, q)?;
        let (n1, n0, res) = mtd_for_threshold(cohort, tau_hat, threshold, t_star);
        let (mtd, reason) = match res {
            Ok(v) => (Some(v), None),
            Err(r) => (None, Some(r)),
        };
        let beneficial = mtd.map_or(false, |v| v - overall_mtd >= margin);
        points.push(MtdPoint {
            one_minus_q: 1.0 - q,
            threshold,
            n_treated: n1,
            n_control: n0,
            mtd,
            reason,
            beneficial,
        });
    }
    Ok(MtdCurve {
        t_star,
        points,
        overall_mtd,
        margin,
    })
}

/// The default percentile grid 90%, 80%, ..., 10%.
pub fn default_grid(spacing: f64) -> Result<Vec<f64>> {
    if !(spacing > 0.0 && spacing < 1.0) {
        return Err(SurvError::InvalidArgument(format!(
            "grid spacing must lie in (0, 1), got {spacing}"
        )));
    }
    let mut grid = Vec::new();
    let mut q = 1.0 - spacing;
    while q > 1e-9 {
        grid.push((q * 1e9).round() / 1e9);
        q -= spacing;
    }
    Ok(grid)
}

fn check_lengths(cohort: &Cohort, tau_hat: &[f64]) -> Result<()> {
    if tau_hat.len() != cohort.n() {
        return Err(SurvError::InvalidArgument(format!(
            "tau_hat has {} entries for a cohort of {}",
            tau_hat.len(),
            cohort.n()
        )));
    }
    Ok(())
}

impl MtdCurve {
    /// Delimited-text export: `one_minus_q,threshold,n_treated,n_control,mtd,beneficial,reason`.
    pub fn write_table<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "one_minus_q,threshold,n_treated,n_control,mtd,beneficial,reason")?;
        for p in &self.points {
            let mtd = p.mtd.map_or(String::new(), |v| format!("{v}"));
            let reason = p.reason.clone().unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.one_minus_q, p.threshold, p.n_treated, p.n_control, mtd, p.beneficial as u8, reason
            )?;
        }
        Ok(())
    }
}
