//! Propensity-score forest: classification trees on the binary treatment
//! with probability prediction by leaf-frequency averaging.
//!
//! For a 0/1 response the Gini impurity decrease and the variance reduction
//! rank splits identically, so the trees reuse the regression machinery with
//! unit weights; leaf frequencies are leaf means. Predictions are clipped
//! away from 0 and 1 to keep downstream inverse-propensity weights finite.

use serde::{Deserialize, Serialize};

use super::regression::{RegressionForest, RegressionForestParams};
use super::ColMatrix;
use crate::error::SurvError;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityForestParams {
    pub n_trees: usize,
    /// Candidate covariates per split; defaults to `ceil(sqrt(p_active))`.
    pub mtry: Option<usize>,
    pub min_leaf_samples: usize,
    pub max_depth: Option<usize>,
    /// Predictions are clipped to `[clip, 1 - clip]`.
    pub clip: f64,
    pub bootstrap: bool,
}

impl Default for PropensityForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf_samples: 10,
            max_depth: None,
            clip: 0.01,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityForest {
    forest: RegressionForest,
    pub clip: f64,
}

impl PropensityForest {
    pub fn fit(x: &ColMatrix, treatments: &[u8], params: &PropensityForestParams, seed: u64) -> Result<Self> {
        if treatments.len() != x.n_rows() {
            return Err(SurvError::InvalidArgument(
                "propensity forest: treatment length mismatch".into(),
            ));
        }
        let n1 = treatments.iter().filter(|&&a| a == 1).count();
        if n1 == 0 || n1 == treatments.len() {
            return Err(SurvError::SingleArm);
        }
        if !(params.clip > 0.0 && params.clip < 0.5) {
            return Err(SurvError::InvalidArgument(format!(
                "propensity clip must lie in (0, 0.5), got {}",
                params.clip
            )));
        }
        let active = x.n_cols().max(1);
        let reg_params = RegressionForestParams {
            n_trees: params.n_trees,
            mtry: Some(
                params
                    .mtry
                    .unwrap_or_else(|| (active as f64).sqrt().ceil() as usize),
            ),
            min_leaf_weight: params.min_leaf_samples as f64,
            min_leaf_samples: params.min_leaf_samples,
            max_depth: params.max_depth,
            bootstrap: params.bootstrap,
        };
        let y: Vec<f64> = treatments.iter().map(|&a| a as f64).collect();
        let w = vec![1.0; treatments.len()];
        let forest = RegressionForest::fit(x, &y, &w, &reg_params, seed)?;
        Ok(Self {
            forest,
            clip: params.clip,
        })
    }

    /// Estimated `P(A = 1 | x)`, clipped into `[clip, 1 - clip]`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_raw(x).clamp(self.clip, 1.0 - self.clip)
    }

    /// Unclipped leaf-frequency average, for clip diagnostics.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.forest.predict(x)
    }
}
