//! Weibull accelerated-failure-time regression by right-censored maximum
//! likelihood.
//!
//! Model: `S(t|x) = exp(-(t/lambda)^eta * exp(beta' x))` with the intercept
//! absorbed into the scale. The likelihood is maximized over
//! `(log eta, log lambda, beta)` by BFGS with an analytic gradient, keeping
//! the positivity constraints unconstrained.

use serde::{Deserialize, Serialize};

use crate::error::SurvError;
use crate::Result;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullAftModel {
    pub shape: f64,
    pub scale: f64,
    pub coefficients: Vec<f64>,
}

impl WeibullAftModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    pub fn cumulative_hazard(&self, t: f64, x: &[f64]) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (t / self.scale).powf(self.shape) * self.linear_predictor(x).exp()
    }

    pub fn survival(&self, t: f64, x: &[f64]) -> f64 {
        (-self.cumulative_hazard(t, x)).exp()
    }
}

/// Convergence diagnostics for a Weibull fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeibullFitInfo {
    /// Mean log-likelihood at the optimum.
    pub loglik: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Mean log-likelihood after every accepted step.
    pub loglik_path: Vec<f64>,
}

/// Mean right-censored Weibull log-likelihood at
/// `theta = [log eta, log lambda, beta_1..beta_p]`.
///
/// `x` is row-major with `p` columns.
pub fn weibull_log_likelihood(theta: &[f64], times: &[f64], events: &[bool], x: &[f64], p: usize) -> f64 {
    let n = times.len();
    let (a, b) = (theta[0], theta[1]);
    let eta = a.exp();
    let beta = &theta[2..2 + p];
    let mut ll = 0.0;
    for i in 0..n {
        let f: f64 = beta.iter().zip(&x[i * p..(i + 1) * p]).map(|(bj, v)| bj * v).sum();
        let u = times[i];
        if u == 0.0 {
            // H(0) = 0; censored rows at time zero carry no information.
            continue;
        }
        let z = eta * (u.ln() - b);
        let h = (z + f).exp();
        if events[i] {
            ll += a - eta * b + (eta - 1.0) * u.ln() + f;
        }
        ll -= h;
    }
    ll / n as f64
}

/// Analytic gradient of [`weibull_log_likelihood`] in `theta`.
pub fn weibull_score(theta: &[f64], times: &[f64], events: &[bool], x: &[f64], p: usize) -> Vec<f64> {
    let n = times.len();
    let (a, b) = (theta[0], theta[1]);
    let eta = a.exp();
    let beta = &theta[2..2 + p];
    let mut g = vec![0.0; 2 + p];
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        let f: f64 = beta.iter().zip(row).map(|(bj, v)| bj * v).sum();
        let u = times[i];
        if u == 0.0 {
            continue;
        }
        let z = eta * (u.ln() - b);
        let h = (z + f).exp();
        let d = if events[i] { 1.0 } else { 0.0 };
        g[0] += d * (1.0 + z) - h * z;
        g[1] += eta * (h - d);
        for j in 0..p {
            g[2 + j] += (d - h) * row[j];
        }
    }
    let nf = n as f64;
    g.iter_mut().for_each(|v| *v /= nf);
    g
}

/// Fits the Weibull AFT model by quasi-Newton ascent.
///
/// Requires at least `p + 2` events with strictly positive times.
pub fn fit_weibull_aft(
    times: &[f64],
    events: &[bool],
    x: &[f64],
    p: usize,
) -> Result<(WeibullAftModel, WeibullFitInfo)> {
    let n = times.len();
    if n == 0 {
        return Err(SurvError::EmptyInput("weibull fit requires observations"));
    }
    if events.len() != n || x.len() != n * p {
        return Err(SurvError::InvalidArgument("weibull fit: dimension mismatch".into()));
    }
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events < p + 2 {
        return Err(SurvError::TooFewEvents {
            required: p + 2,
            found: n_events,
        });
    }
    for i in 0..n {
        if events[i] && times[i] <= 0.0 {
            return Err(SurvError::InvalidArgument(format!(
                "event time must be positive, got {} at row {i}",
                times[i]
            )));
        }
    }

    // Moment initialization from event log-times: for S(t) = exp(-(t/lambda)^eta),
    // log T = log lambda + W/eta with W Gumbel(min), E W = -gamma, Var W = pi^2/6.
    let logs: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t.ln())
        .collect();
    let m = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / logs.len() as f64;
    let sd = var.sqrt().max(1e-3);
    let eta0 = (std::f64::consts::PI / (sd * 6.0f64.sqrt())).clamp(0.05, 50.0);
    let b0 = m + EULER_GAMMA / eta0;

    let dim = 2 + p;
    let mut theta = vec![0.0; dim];
    theta[0] = eta0.ln();
    theta[1] = b0;

    let f = |th: &[f64]| -weibull_log_likelihood(th, times, events, x, p);
    let grad = |th: &[f64]| {
        let mut g = weibull_score(th, times, events, x, p);
        g.iter_mut().for_each(|v| *v = -*v);
        g
    };

    let max_iter = 500;
    let tol = 1e-9;
    let mut h_inv = identity(dim);
    let mut fx = f(&theta);
    let mut g = grad(&theta);
    let mut path = vec![-fx];
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gnorm < tol {
            let model = model_from(&theta, p);
            return Ok((
                model,
                WeibullFitInfo {
                    loglik: -fx,
                    iterations: it,
                    grad_norm: gnorm,
                    loglik_path: path,
                },
            ));
        }
        // Search direction; fall back to steepest descent if not a descent direction.
        let mut d = mat_vec_neg(&h_inv, &g);
        let mut dg: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(dg < 0.0) || d.iter().any(|v| !v.is_finite()) {
            h_inv = identity(dim);
            d = g.iter().map(|v| -v).collect();
            dg = -g.iter().map(|v| v * v).sum::<f64>();
        }
        // Armijo backtracking.
        let mut step = 1.0;
        let mut accepted = false;
        let mut theta_new = theta.clone();
        let mut f_new = fx;
        for _ in 0..60 {
            for k in 0..dim {
                theta_new[k] = theta[k] + step * d[k];
            }
            f_new = f(&theta_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * dg {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let g_new = grad(&theta_new);
        let s: Vec<f64> = (0..dim).map(|k| theta_new[k] - theta[k]).collect();
        let yv: Vec<f64> = (0..dim).map(|k| g_new[k] - g[k]).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            bfgs_update(&mut h_inv, &s, &yv, sy);
        }
        theta = theta_new;
        fx = f_new;
        g = g_new;
        path.push(-fx);
    }

    let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    // Accept a near-stationary point that merely exhausted the line search.
    if gnorm < 1e-5 {
        let model = model_from(&theta, p);
        return Ok((
            model,
            WeibullFitInfo {
                loglik: -fx,
                iterations,
                grad_norm: gnorm,
                loglik_path: path,
            },
        ));
    }
    Err(SurvError::NonConvergence {
        iterations,
        grad_norm: gnorm,
    })
}

fn model_from(theta: &[f64], p: usize) -> WeibullAftModel {
    WeibullAftModel {
        shape: theta[0].exp(),
        scale: theta[1].exp(),
        coefficients: theta[2..2 + p].to_vec(),
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec_neg(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| -(0..n).map(|j| m[i * n + j] * v[j]).sum::<f64>())
        .collect()
}

/// BFGS inverse-Hessian update `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum::<f64>())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + rho * (1.0 + rho * yhy) * s[i] * s[j];
        }
    }
}
