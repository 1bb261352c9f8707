//! KernelSHAP attribution of CATE predictions to covariates, the
//! attribution-score summary, and per-covariate importance rankings.
//!
//! Masked covariates are replaced by background values (marginal
//! expectation over a reference set). With `p` at or below the exact
//! threshold all `2^p` coalitions are enumerated and the Shapley-kernel
//! weighted least squares recovers exact Shapley values; otherwise paired
//! coalition sampling runs within the evaluation budget. The constraints on
//! the empty and full coalitions are enforced by substitution, so local
//! accuracy holds by construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SurvError;
use crate::linalg::weighted_least_squares;
use crate::metalearners::CateModel;
use crate::rng::{derive_seed, salt, seeded};
use crate::Result;

/// Anything that predicts from an original-space covariate vector.
pub trait CatePredictor: Sync {
    fn predict_row(&self, covariates: &[f64]) -> f64;
}

impl CatePredictor for CateModel {
    fn predict_row(&self, covariates: &[f64]) -> f64 {
        let row = self.design().expand(covariates);
        self.predict_design(&row)
    }
}

/// Adapter for plain functions (oracles, test models).
pub struct FnPredictor<F: Fn(&[f64]) -> f64 + Sync>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> CatePredictor for FnPredictor<F> {
    fn predict_row(&self, covariates: &[f64]) -> f64 {
        (self.0)(covariates)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapConfig {
    /// Reference rows (original covariate space) for marginal masking.
    pub background: Vec<Vec<f64>>,
    /// Max coalition evaluations per subject in sampled mode.
    pub coalition_budget: usize,
    /// Full enumeration when the number of varying covariates is at most
    /// this; capped at 15 to bound the 2^p blowup.
    pub exact_threshold: usize,
    pub seed: u64,
}

impl ShapConfig {
    pub fn new(background: Vec<Vec<f64>>, seed: u64) -> Self {
        Self {
            background,
            coalition_budget: 2048,
            exact_threshold: 12,
            seed,
        }
    }
}

/// Per-subject, per-covariate attributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    /// Row-major `n_subjects x n_covariates`.
    pub values: Vec<f64>,
    pub n_subjects: usize,
    pub n_covariates: usize,
    /// Mean prediction over the background set.
    pub base_value: f64,
    pub covariate_names: Vec<String>,
    /// Model predictions per subject (the additivity targets).
    pub predictions: Vec<f64>,
}

impl ShapMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_covariates..(i + 1) * self.n_covariates]
    }

    /// Largest additivity violation `|phi0 + sum_j v_ij - tau(x_i)|`.
    pub fn max_additivity_gap(&self) -> f64 {
        (0..self.n_subjects)
            .map(|i| {
                let s: f64 = self.row(i).iter().sum();
                (self.base_value + s - self.predictions[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Delimited-text export: `subject` column plus one column per covariate.
    pub fn write_table<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("subject");
        for name in &self.covariate_names {
            header.push(',');
            header.push_str(name);
        }
        header.push_str(",prediction");
        writeln!(w, "{header}")?;
        for i in 0..self.n_subjects {
            let mut line = format!("{i}");
            for v in self.row(i) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            line.push(',');
            line.push_str(&format!("{}", self.predictions[i]));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Shapley kernel weight for a coalition of size `s` out of `p` features,
/// folding in the count of such coalitions.
fn kernel_weight(p: usize, s: usize) -> f64 {
    let pf = p as f64;
    let sf = s as f64;
    (pf - 1.0) / (binomial(p, s) * sf * (pf - sf))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

/// Explains each subject's prediction; see the module docs for the masking
/// and solver conventions.
pub fn kernel_shap<P: CatePredictor>(
    model: &P,
    subjects: &[Vec<f64>],
    names: &[String],
    config: &ShapConfig,
) -> Result<ShapMatrix> {
    if config.background.is_empty() {
        return Err(SurvError::EmptyInput("kernel shap requires a nonempty background set"));
    }
    if subjects.is_empty() {
        return Err(SurvError::EmptyInput("kernel shap requires at least one subject"));
    }
    if config.exact_threshold > 15 {
        return Err(SurvError::InvalidArgument(
            "shap exact_threshold must be at most 15".into(),
        ));
    }
    let p = names.len();
    for row in subjects.iter().chain(config.background.iter()) {
        if row.len() != p {
            return Err(SurvError::SchemaMismatch(format!(
                "shap row has {} covariates, expected {p}",
                row.len()
            )));
        }
    }

    let base_value = config
        .background
        .iter()
        .map(|b| model.predict_row(b))
        .sum::<f64>()
        / config.background.len() as f64;

    let results: Vec<Result<(Vec<f64>, f64)>> = subjects
        .par_iter()
        .enumerate()
        .map(|(si, x)| explain_subject(model, x, p, base_value, config, si))
        .collect();

    let mut values = Vec::with_capacity(subjects.len() * p);
    let mut predictions = Vec::with_capacity(subjects.len());
    for r in results {
        let (phi, fx) = r?;
        values.extend_from_slice(&phi);
        predictions.push(fx);
    }
    Ok(ShapMatrix {
        values,
        n_subjects: subjects.len(),
        n_covariates: p,
        base_value,
        covariate_names: names.to_vec(),
        predictions,
    })
}

fn explain_subject<P: CatePredictor>(
    model: &P,
    x: &[f64],
    p: usize,
    base_value: f64,
    config: &ShapConfig,
    subject_index: usize,
) -> Result<(Vec<f64>, f64)> {
    let f_x = model.predict_row(x);

    // Covariates that differ from at least one background row can carry
    // attribution; the rest provably satisfy v(S + j) = v(S) and get 0.
    let varying: Vec<usize> = (0..p)
        .filter(|&j| config.background.iter().any(|b| b[j] != x[j]))
        .collect();
    let m = varying.len();
    let mut phi = vec![0.0; p];
    if m == 0 {
        return Ok((phi, f_x));
    }
    let total = f_x - base_value;
    if m == 1 {
        phi[varying[0]] = total;
        return Ok((phi, f_x));
    }

    // Coalition masks over the varying features, with accumulated weights.
    let coalitions: Vec<(u64, f64)> = if m <= config.exact_threshold {
        (1..((1u64 << m) - 1))
            .map(|mask| (mask, kernel_weight(m, mask.count_ones() as usize)))
            .collect()
    } else {
        if config.coalition_budget < p + 2 {
            return Err(SurvError::InvalidArgument(format!(
                "shap coalition budget {} is below p + 2 = {}",
                config.coalition_budget,
                p + 2
            )));
        }
        sample_paired_coalitions(m, config.coalition_budget, derive_seed(config.seed, salt::SHAP_SUBJECT, subject_index as u64))
    };

    // Evaluate v(mask) = mean over background of the masked composite.
    let mut scratch = x.to_vec();
    let values: Vec<f64> = coalitions
        .iter()
        .map(|&(mask, _)| {
            let mut acc = 0.0;
            for b in &config.background {
                scratch.copy_from_slice(x);
                for (bit, &j) in varying.iter().enumerate() {
                    if mask & (1 << bit) == 0 {
                        scratch[j] = b[j];
                    }
                }
                acc += model.predict_row(&scratch);
            }
            acc / config.background.len() as f64
        })
        .collect();

    // Constrained WLS with the empty/full constraints substituted out:
    // regress g = v - v0 - z_last (vF - v0) on (z_j - z_last), j < m-1,
    // then back out the last coefficient from the efficiency constraint.
    let cols = m - 1;
    let mut design = Vec::with_capacity(coalitions.len() * cols);
    let mut target = Vec::with_capacity(coalitions.len());
    let mut weights = Vec::with_capacity(coalitions.len());
    for (k, &(mask, w)) in coalitions.iter().enumerate() {
        let z_last = ((mask >> (m - 1)) & 1) as f64;
        for bit in 0..cols {
            let z = ((mask >> bit) & 1) as f64;
            design.push(z - z_last);
        }
        target.push(values[k] - base_value - z_last * total);
        weights.push(w);
    }
    let beta = weighted_least_squares(&design, &target, &weights, cols, 0.0)
        .or_else(|_| weighted_least_squares(&design, &target, &weights, cols, 1e-10))?;
    let mut last = total;
    for (bit, &b) in beta.iter().enumerate() {
        phi[varying[bit]] = b;
        last -= b;
    }
    phi[varying[m - 1]] = last;
    Ok((phi, f_x))
}

/// Draws coalition masks in complementary pairs, sizes distributed per the
/// Shapley kernel; duplicates accumulate into the mask's weight.
fn sample_paired_coalitions(m: usize, budget: usize, seed: u64) -> Vec<(u64, f64)> {
    use rand::Rng;
    let mut rng = seeded(seed);
    // P(size = s) proportional to 1/(s(m-s)), the kernel mass of size s.
    let size_mass: Vec<f64> = (1..m).map(|s| 1.0 / (s as f64 * (m - s) as f64)).collect();
    let mass_total: f64 = size_mass.iter().sum();

    let mut acc: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let full = (1u64 << m) - 1;
    let n_pairs = (budget / 2).max(1);
    let mut bits: Vec<usize> = (0..m).collect();
    for _ in 0..n_pairs {
        let mut u = rng.gen_range(0.0..mass_total);
        let mut s = 1;
        for (idx, &w) in size_mass.iter().enumerate() {
            if u < w {
                s = idx + 1;
                break;
            }
            u -= w;
        }
        // Uniform subset of size s by partial shuffle.
        for i in 0..s {
            let j = rng.gen_range(i..m);
            bits.swap(i, j);
        }
        let mut mask = 0u64;
        for &b in &bits[..s] {
            mask |= 1 << b;
        }
        *acc.entry(mask).or_insert(0.0) += 1.0;
        *acc.entry(full ^ mask).or_insert(0.0) += 1.0;
    }
    let mut out: Vec<(u64, f64)> = acc.into_iter().collect();
    out.sort_by_key(|&(mask, _)| mask);
    out
}

/// The share of absolute attribution mass on a predictive covariate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionScore {
    pub score: f64,
    pub predictive_set: Vec<usize>,
    /// Subjects excluded for having zero total attribution.
    pub n_zero_rows: usize,
}

/// Mean over subjects of `sum_{j in V} |v_ij| / sum_j |v_ij|`.
pub fn attribution_score(shap: &ShapMatrix, predictive_set: &[usize]) -> Result<AttributionScore> {
    if predictive_set.is_empty() {
        return Err(SurvError::InvalidArgument("predictive set must be nonempty".into()));
    }
    if let Some(&j) = predictive_set.iter().find(|&&j| j >= shap.n_covariates) {
        return Err(SurvError::InvalidArgument(format!(
            "predictive covariate index {j} out of range"
        )));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    let mut zero_rows = 0usize;
    for i in 0..shap.n_subjects {
        let row = shap.row(i);
        let denom: f64 = row.iter().map(|v| v.abs()).sum();
        if denom == 0.0 {
            zero_rows += 1;
            continue;
        }
        let num: f64 = predictive_set.iter().map(|&j| row[j].abs()).sum();
        total += num / denom;
        used += 1;
    }
    if used == 0 {
        return Err(SurvError::Numerical(
            "all subjects have zero total attribution".into(),
        ));
    }
    Ok(AttributionScore {
        score: total / used as f64,
        predictive_set: predictive_set.to_vec(),
        n_zero_rows: zero_rows,
    })
}

/// Per-covariate center of the absolute attribution distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VipEntry {
    pub covariate: String,
    pub median_abs: f64,
    pub mean_abs: f64,
}

/// Ranks covariates by the median absolute attribution, descending.
pub fn vip_summary(shap: &ShapMatrix) -> Vec<VipEntry> {
    let mut entries: Vec<(usize, VipEntry)> = (0..shap.n_covariates)
        .map(|j| {
            let mut abs: Vec<f64> = (0..shap.n_subjects)
                .map(|i| shap.row(i)[j].abs())
                .collect();
            abs.sort_by(f64::total_cmp);
            let median = if abs.len() % 2 == 1 {
                abs[abs.len() / 2]
            } else {
                0.5 * (abs[abs.len() / 2 - 1] + abs[abs.len() / 2])
            };
            let mean = abs.iter().sum::<f64>() / abs.len() as f64;
            (
                j,
                VipEntry {
                    covariate: shap.covariate_names[j].clone(),
                    median_abs: median,
                    mean_abs: mean,
                },
            )
        })
        .collect();
    entries.sort_by(|a, b| b.1.median_abs.total_cmp(&a.1.median_abs).then(a.0.cmp(&b.0)));
    entries.into_iter().map(|(_, e)| e).collect()
}
