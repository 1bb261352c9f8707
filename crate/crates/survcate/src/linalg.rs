//! Small dense linear algebra: just enough for the ridge backend and the
//! Shapley-kernel weighted least squares (system sizes are at most a few
//! dozen unknowns).

use crate::error::SurvError;
use crate::Result;

/// Solves `A x = b` for a symmetric positive-definite `A` (row-major, n x n)
/// by Cholesky factorization. `A` and `b` are consumed as scratch space.
pub fn solve_spd(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(SurvError::Numerical(format!(
            "solve_spd: matrix is {} elements, expected {}",
            a.len(),
            n * n
        )));
    }
    // In-place Cholesky: A = L L^T, lower triangle of `a` becomes L.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(SurvError::Numerical(format!(
                "solve_spd: matrix not positive definite at pivot {j} (d = {d:.3e})"
            )));
        }
        let l = d.sqrt();
        a[j * n + j] = l;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }
    // Forward solve L y = b.
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    // Back solve L^T x = y.
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b)
}

/// Weighted least squares `min sum_i w_i (y_i - x_i' beta)^2` via the normal
/// equations, with an optional ridge term on all coefficients.
///
/// `x` is row-major with `cols` columns; zero-weight rows are skipped.
pub fn weighted_least_squares(
    x: &[f64],
    y: &[f64],
    w: &[f64],
    cols: usize,
    ridge: f64,
) -> Result<Vec<f64>> {
    let n = y.len();
    if x.len() != n * cols || w.len() != n {
        return Err(SurvError::Numerical(
            "weighted_least_squares: dimension mismatch".into(),
        ));
    }
    let mut xtx = vec![0.0; cols * cols];
    let mut xty = vec![0.0; cols];
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let row = &x[i * cols..(i + 1) * cols];
        for j in 0..cols {
            let wxj = wi * row[j];
            xty[j] += wxj * y[i];
            for k in j..cols {
                xtx[j * cols + k] += wxj * row[k];
            }
        }
    }
    for j in 0..cols {
        for k in 0..j {
            xtx[j * cols + k] = xtx[k * cols + j];
        }
        xtx[j * cols + j] += ridge;
    }
    solve_spd(xtx, xty)
}
