//! Weighted ridge regression: the cheap linear backend for the
//! pseudo-outcome regression.

use serde::{Deserialize, Serialize};

use crate::error::SurvError;
use crate::linalg::solve_spd;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl RidgeModel {
    /// Minimizes `sum_i w_i (y_i - b0 - b'x_i)^2 + alpha ||b||^2` (the
    /// intercept is not penalized). `x` is row-major with `p` columns.
    pub fn fit(x: &[f64], y: &[f64], w: &[f64], p: usize, alpha: f64) -> Result<Self> {
        let n = y.len();
        if x.len() != n * p || w.len() != n {
            return Err(SurvError::InvalidArgument("ridge fit: dimension mismatch".into()));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(SurvError::AllWeightsZero);
        }
        let d = p + 1;
        let mut xtx = vec![0.0; d * d];
        let mut xty = vec![0.0; d];
        let mut row = vec![0.0; d];
        for i in 0..n {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            row[0] = 1.0;
            row[1..].copy_from_slice(&x[i * p..(i + 1) * p]);
            for j in 0..d {
                let wxj = wi * row[j];
                xty[j] += wxj * y[i];
                for k in j..d {
                    xtx[j * d + k] += wxj * row[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                xtx[j * d + k] = xtx[k * d + j];
            }
        }
        for j in 1..d {
            xtx[j * d + j] += alpha;
        }
        // Tiny jitter keeps the intercept block factorizable when columns
        // are collinear with it.
        xtx[0] += 1e-12;
        let beta = solve_spd(xtx, xty)?;
        Ok(Self {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_linear_signal() {
        let n = 50;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let v = i as f64 / 10.0 - 2.5;
            x.push(v);
            y.push(1.5 - 0.8 * v);
        }
        let w = vec![1.0; n];
        let m = RidgeModel::fit(&x, &y, &w, 1, 1e-8).unwrap();
        assert!((m.intercept - 1.5).abs() < 1e-6);
        assert!((m.coefficients[0] + 0.8).abs() < 1e-6);
    }

    #[test]
    fn zero_weight_rows_are_inert() {
        let x = vec![0.0, 1.0, 2.0, 50.0];
        let y = vec![0.0, 1.0, 2.0, -99.0];
        let w = vec![1.0, 1.0, 1.0, 0.0];
        let m = RidgeModel::fit(&x, &y, &w, 1, 1e-10).unwrap();
        assert!((m.predict(&[3.0]) - 3.0).abs() < 1e-6);
    }
}
