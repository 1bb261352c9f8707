//! Simulation benchmark: Weibull data-generating processes under three
//! heterogeneity scenarios and three treatment-allocation designs, plus the
//! evaluation battery (bias, binned RMSE, sign-classification metrics,
//! attribution score) and the multi-replicate orchestrator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, CovariateKind, CovariateSchema, SurvivalRecord, TargetTime};
use crate::error::SurvError;
use crate::interpret::{attribution_score, kernel_shap, ShapConfig};
use crate::metalearners::{
    build_pseudo_outcomes_with, estimate_cate, LearnerKind, PipelineConfig,
};
use crate::rng::{derive_seed, salt, seeded};
use crate::Result;

pub const N_COVARIATES: usize = 10;
const ETA: f64 = 2.0;
const LAMBDA_0: f64 = 18.0;
const LAMBDA_1: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Scenario::S1),
            "S2" => Ok(Scenario::S2),
            "S3" => Ok(Scenario::S3),
            other => Err(SurvError::InvalidArgument(format!("unknown scenario {other:?}"))),
        }
    }

    /// Baseline effect shared by both arms.
    pub fn b_function(&self, x: &[f64]) -> f64 {
        match self {
            Scenario::S1 => 0.25 * x[0] + 0.7 * x[2] + 0.5 * x[5] + 0.4 * x[6] + 0.3 * x[9],
            Scenario::S2 | Scenario::S3 => {
                0.35 * x[0].exp() + 0.4 * x[1] * x[1] + 0.7 * x[2].sin() - 0.2 * x[4]
                    + 0.6 * x[5].sin()
                    + 0.5 * x[6]
                    + 0.45 * x[0] * x[7]
                    - 0.15 * x[9]
            }
        }
    }

    /// Treatment-specific effect: the direct source of heterogeneity.
    pub fn h_function(&self, x: &[f64]) -> f64 {
        match self {
            Scenario::S1 | Scenario::S2 => -0.1 * x[1] + 0.95 * x[4] - 0.6 * x[7],
            Scenario::S3 => {
                -0.2 * x[0] * x[0] - 0.25 * x[1] * x[2] + 0.2 * x[4].exp() - 0.3 * x[6]
                    - 0.4 * x[2] * x[7]
            }
        }
    }

    /// 0-based indices of the covariates entering `h`.
    pub fn predictive_set(&self) -> Vec<usize> {
        match self {
            Scenario::S1 | Scenario::S2 => vec![1, 4, 7],
            Scenario::S3 => vec![0, 1, 2, 4, 6, 7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Rct,
    BalancedObs,
    UnbalancedObs,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::Rct, Design::BalancedObs, Design::UnbalancedObs];

    pub fn name(&self) -> &'static str {
        match self {
            Design::Rct => "rct",
            Design::BalancedObs => "balanced",
            Design::UnbalancedObs => "unbalanced",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rct" => Ok(Design::Rct),
            "balanced" | "balanced-obs" | "balanced_obs" => Ok(Design::BalancedObs),
            "unbalanced" | "unbalanced-obs" | "unbalanced_obs" => Ok(Design::UnbalancedObs),
            other => Err(SurvError::InvalidArgument(format!("unknown design {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTimeRule {
    Median,
    P75,
}

impl TargetTimeRule {
    fn quantile(&self) -> f64 {
        match self {
            TargetTimeRule::Median => 0.5,
            TargetTimeRule::P75 => 0.75,
        }
    }
}

/// Coding of the sign-generated binary covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryCoding {
    PlusMinusOne,
    ZeroOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub design: Design,
    pub n_train: usize,
    pub n_test: usize,
    pub target_time_rule: TargetTimeRule,
    pub censor_rate: f64,
    pub binary_coding: BinaryCoding,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, design: Design, n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            scenario,
            design,
            n_train,
            n_test,
            target_time_rule: TargetTimeRule::Median,
            censor_rate: 0.30,
            binary_coding: BinaryCoding::PlusMinusOne,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(SurvError::InvalidArgument("n_train and n_test must be positive".into()));
        }
        if !(self.censor_rate > 0.0 && self.censor_rate < 1.0) {
            return Err(SurvError::InvalidArgument(format!(
                "censor_rate must lie in (0, 1), got {}",
                self.censor_rate
            )));
        }
        Ok(())
    }

    /// Schema of the simulated covariates: `x1..x5` continuous,
    /// `x6..x10` binary.
    pub fn schema(&self) -> CovariateSchema {
        let entries = (0..N_COVARIATES)
            .map(|j| {
                let kind = if j < 5 {
                    CovariateKind::Continuous
                } else {
                    CovariateKind::Binary
                };
                (format!("x{}", j + 1), kind)
            })
            .collect();
        CovariateSchema::new(entries).expect("static schema is valid")
    }
}

/// Row-major `n x 10` covariate draws: five standard normals and five
/// sign-coded binaries.
pub fn generate_covariates(n: usize, coding: BinaryCoding, seed: u64) -> Vec<f64> {
    let mut rng = seeded(derive_seed(seed, salt::SIM_COVARIATES, 0));
    let mut x = Vec::with_capacity(n * N_COVARIATES);
    for _ in 0..n {
        for j in 0..N_COVARIATES {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            if j < 5 {
                x.push(z);
            } else {
                let sign = if z >= 0.0 { 1.0 } else { -1.0 };
                x.push(match coding {
                    BinaryCoding::PlusMinusOne => sign,
                    BinaryCoding::ZeroOne => (sign + 1.0) / 2.0,
                });
            }
        }
    }
    x
}

fn expit(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// True assignment probability under a design.
pub fn true_propensity(design: Design, x: &[f64]) -> f64 {
    match design {
        Design::Rct => 0.5,
        Design::BalancedObs => expit(
            0.15 - 0.8 * x[0] + 0.5 * x[1] - 0.9 * x[2] - 0.9 * x[3] + 0.6 * x[5] + 0.7 * x[6]
                - 0.8 * x[7]
                - 0.9 * x[8],
        ),
        Design::UnbalancedObs => expit(
            1.2 * (-1.2 - 0.8 * x[0] + 0.5 * x[1] - 0.9 * x[2] - 0.9 * x[3]
                + 0.6 * x[5]
                + 0.7 * x[6]
                - 0.8 * x[7]
                - 0.9 * x[8]),
        ),
    }
}

/// Draws treatments `A ~ Bernoulli(e(X))` and returns the true propensities.
pub fn assign_treatment(x: &[f64], n: usize, design: Design, seed: u64) -> (Vec<u8>, Vec<f64>) {
    let mut rng = seeded(derive_seed(seed, salt::SIM_TREATMENT, 0));
    let mut a = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    for i in 0..n {
        let row = &x[i * N_COVARIATES..(i + 1) * N_COVARIATES];
        let p = true_propensity(design, row);
        a.push(rng.gen_bool(p) as u8);
        e.push(p);
    }
    (a, e)
}

/// Closed-form `S_A(t|x) = exp(-(t/lambda_A)^eta * exp(f_A(x)))`, the
/// inverse of the simulation transform.
pub fn oracle_survival(scenario: Scenario, arm: u8, x: &[f64], t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let lambda = if arm == 1 { LAMBDA_1 } else { LAMBDA_0 };
    let f = scenario.b_function(x) + if arm == 1 { scenario.h_function(x) } else { 0.0 };
    (-(t / lambda).powf(ETA) * f.exp()).exp()
}

/// True CATE `tau(x; t) = S1(t|x) - S0(t|x)`.
pub fn oracle_cate(scenario: Scenario, x: &[f64], t: f64) -> f64 {
    oracle_survival(scenario, 1, x, t) - oracle_survival(scenario, 0, x, t)
}

/// A generated cohort with its oracle columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCohort {
    pub cohort: Cohort,
    pub scenario: Scenario,
    pub design: Design,
    pub true_propensity: Vec<f64>,
    /// Potential survival times under control and treatment.
    pub t0: Vec<f64>,
    pub t1: Vec<f64>,
    pub censor_time: Vec<f64>,
}

impl SimulatedCohort {
    pub fn n(&self) -> usize {
        self.cohort.n()
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        &self.cohort.records()[i].covariates
    }

    pub fn true_cate_at(&self, t: f64) -> Vec<f64> {
        (0..self.n())
            .map(|i| oracle_cate(self.scenario, self.covariate_row(i), t))
            .collect()
    }

    /// Row-wise generator-consistency assertion: `U = min(T(A), C)` and
    /// `delta = I(T(A) < C)`.
    pub fn assert_consistency(&self) {
        for (i, r) in self.cohort.records().iter().enumerate() {
            let ta = if r.treatment == 1 { self.t1[i] } else { self.t0[i] };
            let c = self.censor_time[i];
            assert_eq!(r.observed_time, ta.min(c), "row {i}: U != min(T, C)");
            assert_eq!(r.event, ta < c, "row {i}: delta != I(T < C)");
        }
    }
}

/// Draws potential times by the inverse-transform `T(A) =
/// lambda_A (-ln(U) / exp(f_A(X)))^(1/eta)` (one uniform per subject drives
/// both arms) and exponential censoring at `censor_rate_param`.
pub fn generate_outcomes(
    x: &[f64],
    treatments: &[u8],
    scenario: Scenario,
    censor_rate_param: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>) {
    let n = treatments.len();
    let mut rng_t = seeded(derive_seed(seed, salt::SIM_OUTCOME, 0));
    let mut rng_c = seeded(derive_seed(seed, salt::SIM_CENSORING, 0));
    let mut t0 = Vec::with_capacity(n);
    let mut t1 = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut u_obs = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for i in 0..n {
        let row = &x[i * N_COVARIATES..(i + 1) * N_COVARIATES];
        let b = scenario.b_function(row);
        let h = scenario.h_function(row);
        let u: f64 = rng_t.gen_range(1e-300..1.0);
        let pt0 = LAMBDA_0 * (-u.ln() / b.exp()).powf(1.0 / ETA);
        let pt1 = LAMBDA_1 * (-u.ln() / (b + h).exp()).powf(1.0 / ETA);
        let uc: f64 = rng_c.gen_range(1e-300..1.0);
        let ct = -uc.ln() / censor_rate_param;
        let ta = if treatments[i] == 1 { pt1 } else { pt0 };
        t0.push(pt0);
        t1.push(pt1);
        c.push(ct);
        u_obs.push(ta.min(ct));
        delta.push(ta < ct);
    }
    (t0, t1, c, u_obs, delta)
}

/// Generates a full simulated cohort with the given censoring rate
/// parameter (see [`calibrate_censoring`]).
pub fn simulate_cohort(spec: &ScenarioSpec, n: usize, censor_rate_param: f64, seed: u64) -> Result<SimulatedCohort> {
    spec.validate()?;
    let x = generate_covariates(n, spec.binary_coding, seed);
    let (a, e) = assign_treatment(&x, n, spec.design, seed);
    let (t0, t1, c, u, delta) = generate_outcomes(&x, &a, spec.scenario, censor_rate_param, seed);
    let records: Vec<SurvivalRecord> = (0..n)
        .map(|i| {
            SurvivalRecord::new(
                u[i],
                delta[i],
                a[i],
                x[i * N_COVARIATES..(i + 1) * N_COVARIATES].to_vec(),
            )
        })
        .collect();
    let cohort = Cohort::new(spec.schema(), records)?;
    Ok(SimulatedCohort {
        cohort,
        scenario: spec.scenario,
        design: spec.design,
        true_propensity: e,
        t0,
        t1,
        censor_time: c,
    })
}

/// Root-finds the exponential censoring rate hitting the target censored
/// fraction on a Monte Carlo probe of 1e5 subjects.
pub fn calibrate_censoring(
    scenario: Scenario,
    design: Design,
    binary_coding: BinaryCoding,
    target_rate: f64,
    seed: u64,
) -> Result<f64> {
    if !(0.01..1.0).contains(&target_rate) {
        return Err(SurvError::InvalidArgument(format!(
            "censoring target must lie in [0.01, 1), got {target_rate}"
        )));
    }
    const PROBE_N: usize = 100_000;
    let probe_seed = derive_seed(seed, salt::SIM_CENSORING, 12345);
    let x = generate_covariates(PROBE_N, binary_coding, probe_seed);
    let (a, _) = assign_treatment(&x, PROBE_N, design, probe_seed);
    // Realized potential time per subject under its assigned arm.
    let mut rng_t = seeded(derive_seed(probe_seed, salt::SIM_OUTCOME, 0));
    let mut rng_c = seeded(derive_seed(probe_seed, salt::SIM_CENSORING, 0));
    let mut t_assigned = Vec::with_capacity(PROBE_N);
    let mut neg_log_uc = Vec::with_capacity(PROBE_N);
    for i in 0..PROBE_N {
        let row = &x[i * N_COVARIATES..(i + 1) * N_COVARIATES];
        let b = scenario.b_function(row);
        let h = scenario.h_function(row);
        let f = if a[i] == 1 { b + h } else { b };
        let lambda = if a[i] == 1 { LAMBDA_1 } else { LAMBDA_0 };
        let u: f64 = rng_t.gen_range(1e-300..1.0);
        t_assigned.push(lambda * (-u.ln() / f.exp()).powf(1.0 / ETA));
        let uc: f64 = rng_c.gen_range(1e-300..1.0);
        neg_log_uc.push(-uc.ln());
    }
    let censored_fraction = |rate: f64| -> f64 {
        let mut count = 0usize;
        for i in 0..PROBE_N {
            if neg_log_uc[i] / rate <= t_assigned[i] {
                count += 1;
            }
        }
        count as f64 / PROBE_N as f64
    };

    let mean_t = t_assigned.iter().sum::<f64>() / PROBE_N as f64;
    let mut lo = 1e-9 / mean_t;
    if censored_fraction(lo) > target_rate {
        return Err(SurvError::Numerical(
            "censoring calibration: lower bracket already exceeds target".into(),
        ));
    }
    let mut hi = 1.0 / mean_t;
    let mut expansions = 0;
    while censored_fraction(hi) < target_rate {
        hi *= 2.0;
        expansions += 1;
        if expansions > 100 {
            return Err(SurvError::Numerical(
                "censoring calibration: bracket expansion failed".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored_fraction(mid) < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / hi < 1e-12 {
            break;
        }
    }
    let rate = 0.5 * (lo + hi);
    let achieved = censored_fraction(rate);
    if (achieved - target_rate).abs() > 0.005 {
        return Err(SurvError::Numerical(format!(
            "censoring calibration missed target: {achieved:.4} vs {target_rate:.4}"
        )));
    }
    Ok(rate)
}

/// `Bias = mean(tau_hat - tau_true)` and the binned RMSE over `q_bins`
/// rank-slices of the true CATE (near-equal sizes, remainder on leading
/// bins).
pub fn evaluate_predictions(tau_hat: &[f64], tau_true: &[f64], q_bins: usize) -> Result<(f64, f64)> {
    let n = tau_hat.len();
    if n != tau_true.len() {
        return Err(SurvError::InvalidArgument(format!(
            "prediction/truth length mismatch: {n} vs {}",
            tau_true.len()
        )));
    }
    if n == 0 || q_bins == 0 {
        return Err(SurvError::EmptyInput("evaluate_predictions requires data and bins"));
    }
    let bias = (0..n).map(|i| tau_hat[i] - tau_true[i]).sum::<f64>() / n as f64;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| tau_true[a].total_cmp(&tau_true[b]).then(a.cmp(&b)));
    let q = q_bins.min(n);
    let base = n / q;
    let remainder = n % q;
    let mut rmse_sum = 0.0;
    let mut start = 0usize;
    for bin in 0..q {
        let size = base + usize::from(bin < remainder);
        let slice = &order[start..start + size];
        let mse = slice
            .iter()
            .map(|&i| (tau_hat[i] - tau_true[i]).powi(2))
            .sum::<f64>()
            / size as f64;
        rmse_sum += mse.sqrt();
        start += size;
    }
    Ok((bias, rmse_sum / q as f64))
}

/// Sign-classification metrics against `tau_true > 0`; ratios with zero
/// denominators are `None` and excluded from aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub acc: f64,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f_score: Option<f64>,
}

pub fn classification_metrics(tau_hat: &[f64], tau_true: &[f64]) -> Result<ClassificationMetrics> {
    let n = tau_hat.len();
    if n != tau_true.len() {
        return Err(SurvError::InvalidArgument(format!(
            "prediction/truth length mismatch: {n} vs {}",
            tau_true.len()
        )));
    }
    if n == 0 {
        return Err(SurvError::EmptyInput("classification metrics require data"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..n {
        match (tau_true[i] > 0.0, tau_hat[i] > 0.0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| -> Option<f64> {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let ppv = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    let f_score = match (ppv, sensitivity) {
        (Some(p), Some(s)) => {
            if p + s == 0.0 {
                Some(0.0)
            } else {
                Some(2.0 * p * s / (p + s))
            }
        }
        _ => None,
    };
    Ok(ClassificationMetrics {
        tp,
        fp,
        tn,
        fn_,
        acc: (tp + tn) as f64 / n as f64,
        ppv,
        npv: ratio(tn, tn + fn_),
        sensitivity,
        specificity: ratio(tn, tn + fp),
        f_score,
    })
}

/// Per-replicate, per-method metric row. `label` is a learner name or
/// `"oracle"` for the truth-injection row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub rep: usize,
    pub label: String,
    pub bias: f64,
    pub binned_rmse: f64,
    pub acc: f64,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f_score: Option<f64>,
    pub attribution_score: Option<f64>,
    /// Wall-clock fit+predict time. Held in memory for diagnostics; file
    /// outputs omit it so reruns stay byte-identical.
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerFailure {
    pub rep: usize,
    pub label: String,
    pub message: String,
}

/// Mean and standard deviation of one metric for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEntry {
    pub label: String,
    pub metric: String,
    pub mean: f64,
    pub sd: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec: ScenarioSpec,
    pub censor_rate_param: f64,
    /// Achieved `t*` per replicate.
    pub t_stars: Vec<f64>,
    pub replicates: Vec<ReplicateMetrics>,
    pub failures: Vec<LearnerFailure>,
    pub aggregates: Vec<AggregateEntry>,
}

/// Knobs of the benchmark runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub q_bins: usize,
    /// Attribution scores are computed on at most this many test subjects.
    pub shap_subject_cap: usize,
    pub shap_background: usize,
    /// Learners to compute attribution for; `None` means all.
    pub shap_learners: Option<Vec<LearnerKind>>,
    /// Include a truth-injection row (`tau_hat := tau_true`) per replicate.
    pub include_oracle: bool,
    pub pipeline: PipelineConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            q_bins: 50,
            shap_subject_cap: 100,
            shap_background: 100,
            shap_learners: None,
            include_oracle: false,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Runs the full benchmark: per replicate, generate train/test, pick `t*`
/// from the training observed times, fit every learner, evaluate on the
/// test truth, and aggregate across replicates. Learner failures are
/// recorded and the run continues.
pub fn run_benchmark(
    spec: &ScenarioSpec,
    learners: &[LearnerKind],
    reps: usize,
    options: &BenchOptions,
) -> Result<BenchReport> {
    spec.validate()?;
    if reps == 0 {
        return Err(SurvError::InvalidArgument("reps must be positive".into()));
    }
    let rate = calibrate_censoring(
        spec.scenario,
        spec.design,
        spec.binary_coding,
        spec.censor_rate,
        spec.seed,
    )?;
    let v_h = spec.scenario.predictive_set();

    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    let mut t_stars = Vec::with_capacity(reps);

    for rep in 0..reps {
        let rep_seed = derive_seed(spec.seed, salt::REPLICATE, rep as u64);
        let train = simulate_cohort(spec, spec.n_train, rate, derive_seed(rep_seed, 0, 0))?;
        let test = simulate_cohort(spec, spec.n_test, rate, derive_seed(rep_seed, 0, 1))?;

        let observed = train.cohort.times();
        let t_star_value = crate::subgroup::cate_percentile(&observed, spec.target_time_rule.quantile())?;
        let t_star = TargetTime::new(t_star_value)?;
        t_stars.push(t_star_value);

        let tau_true = test.true_cate_at(t_star_value);
        let n_shap = options.shap_subject_cap.min(test.n());
        let shap_subjects: Vec<Vec<f64>> =
            (0..n_shap).map(|i| test.covariate_row(i).to_vec()).collect();
        let background = sample_background(&train, options.shap_background, rep_seed);
        let names: Vec<String> = train.cohort.schema().names().to_vec();

        if options.include_oracle {
            let (bias, rmse) = evaluate_predictions(&tau_true, &tau_true, options.q_bins)?;
            let cm = classification_metrics(&tau_true, &tau_true)?;
            replicates.push(metrics_row(rep, "oracle", bias, rmse, &cm, None, 0.0));
        }

        for &learner in learners {
            let started = std::time::Instant::now();
            let outcome = (|| -> Result<ReplicateMetrics> {
                let est = estimate_cate(&train.cohort, t_star, learner, &options.pipeline, rep_seed)?;
                let mut tau_hat = Vec::with_capacity(test.n());
                for i in 0..test.n() {
                    tau_hat.push(est.model.predict(test.covariate_row(i))?);
                }
                let (bias, rmse) = evaluate_predictions(&tau_hat, &tau_true, options.q_bins)?;
                let cm = classification_metrics(&tau_hat, &tau_true)?;
                let want_shap = options
                    .shap_learners
                    .as_ref()
                    .map_or(true, |ls| ls.contains(&learner));
                let attr = if want_shap && n_shap > 0 {
                    let shap_cfg = ShapConfig {
                        background: background.clone(),
                        coalition_budget: 2048,
                        exact_threshold: 12,
                        seed: derive_seed(rep_seed, salt::SHAP_SUBJECT, 0),
                    };
                    let shap = kernel_shap(&est.model, &shap_subjects, &names, &shap_cfg)?;
                    Some(attribution_score(&shap, &v_h)?.score)
                } else {
                    None
                };
                Ok(metrics_row(
                    rep,
                    learner.name(),
                    bias,
                    rmse,
                    &cm,
                    attr,
                    started.elapsed().as_secs_f64(),
                ))
            })();
            match outcome {
                Ok(row) => replicates.push(row),
                Err(e) => failures.push(LearnerFailure {
                    rep,
                    label: learner.name().to_string(),
                    message: e.to_string(),
                }),
            }
        }
    }

    let aggregates = aggregate(&replicates);
    Ok(BenchReport {
        spec: spec.clone(),
        censor_rate_param: rate,
        t_stars,
        replicates,
        failures,
        aggregates,
    })
}

fn metrics_row(
    rep: usize,
    label: &str,
    bias: f64,
    rmse: f64,
    cm: &ClassificationMetrics,
    attribution: Option<f64>,
    runtime_secs: f64,
) -> ReplicateMetrics {
    ReplicateMetrics {
        rep,
        label: label.to_string(),
        bias,
        binned_rmse: rmse,
        acc: cm.acc,
        ppv: cm.ppv,
        npv: cm.npv,
        sensitivity: cm.sensitivity,
        specificity: cm.specificity,
        f_score: cm.f_score,
        attribution_score: attribution,
        runtime_secs,
    }
}

fn sample_background(train: &SimulatedCohort, size: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(derive_seed(seed, salt::BACKGROUND, 0));
    let n = train.n();
    (0..size.min(n))
        .map(|_| train.covariate_row(rng.gen_range(0..n)).to_vec())
        .collect()
}

/// Names and extractors of the aggregatable metrics, in output order.
pub const METRIC_NAMES: [&str; 9] = [
    "bias",
    "binned_rmse",
    "acc",
    "ppv",
    "npv",
    "sensitivity",
    "specificity",
    "f_score",
    "attribution_score",
];

pub fn metric_value(row: &ReplicateMetrics, metric: &str) -> Option<f64> {
    match metric {
        "bias" => Some(row.bias),
        "binned_rmse" => Some(row.binned_rmse),
        "acc" => Some(row.acc),
        "ppv" => row.ppv,
        "npv" => row.npv,
        "sensitivity" => row.sensitivity,
        "specificity" => row.specificity,
        "f_score" => row.f_score,
        "attribution_score" => row.attribution_score,
        _ => None,
    }
}

fn aggregate(rows: &[ReplicateMetrics]) -> Vec<AggregateEntry> {
    let mut labels: Vec<String> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label) {
            labels.push(r.label.clone());
        }
    }
    let mut out = Vec::new();
    for label in &labels {
        for metric in METRIC_NAMES {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| &r.label == label)
                .filter_map(|r| metric_value(r, metric))
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                Some(
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64)
                        .sqrt(),
                )
            } else {
                None
            };
            out.push(AggregateEntry {
                label: label.clone(),
                metric: metric.to_string(),
                mean,
                sd,
                n,
            });
        }
    }
    out
}

pub fn build_pseudo_for_bench(
    bundle: &crate::nuisance::NuisanceBundle,
    learner: LearnerKind,
    eps: f64,
) -> Result<crate::metalearners::PseudoOutcomeSet> {
    build_pseudo_outcomes_with(bundle, learner, eps)
}
