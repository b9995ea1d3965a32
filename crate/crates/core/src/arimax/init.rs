//! Hannan-Rissanen start values for the CSS refinement.

use nalgebra::{DMatrix, DVector};

use super::ArimaxError;
use crate::linalg;

/// Start values `[mu, phi, theta, beta]` from two regression passes: a long
/// autoregression supplies residual proxies for the MA terms, then the series
/// is regressed on its own lags, the lagged proxies, and the exogenous
/// columns. MA start values are clamped to (-0.95, 0.95) so the residual
/// recursion at the start point cannot explode.
pub fn start_values(
    y: &[f64],
    x: &DMatrix<f64>,
    p: usize,
    q: usize,
) -> Result<Vec<f64>, ArimaxError> {
    let n = y.len();
    let k = x.ncols();

    let (eps, first_valid) = if q > 0 {
        let l = long_ar_order(n, p, q, k);
        (long_ar_residuals(y, x, l), l)
    } else {
        (vec![0.0; n], 0)
    };

    // Rows where every y lag and every residual-proxy lag exists.
    let t0 = p.max(first_valid + q);
    if t0 >= n {
        return Err(ArimaxError::InsufficientData {
            n,
            params: 1 + p + q + k,
            ratio: f64::NAN,
        });
    }
    let rows = n - t0;
    let cols = 1 + p + q + k;
    let mut design = DMatrix::zeros(rows, cols);
    let mut resp = DVector::zeros(rows);
    for (row, t) in (t0..n).enumerate() {
        design[(row, 0)] = 1.0;
        for i in 0..p {
            design[(row, 1 + i)] = y[t - 1 - i];
        }
        for j in 0..q {
            design[(row, 1 + p + j)] = eps[t - 1 - j];
        }
        for kk in 0..k {
            design[(row, 1 + p + q + kk)] = x[(t, kk)];
        }
        resp[row] = y[t];
    }

    let ls = linalg::least_squares(&design, &resp);
    if ls.rank < cols {
        return Err(ArimaxError::SingularDesign {
            rank: ls.rank,
            cols,
        });
    }

    let mut params: Vec<f64> = ls.coefficients.iter().copied().collect();
    // The regression estimates the coefficient on lagged residuals, which is
    // -theta in the model's sign convention.
    for j in 0..q {
        let c = -params[1 + p + j];
        params[1 + p + j] = c.clamp(-0.95, 0.95);
    }
    Ok(params)
}

/// Lag length for the residual-proxy autoregression: roughly log(n), never
/// shorter than p+q, capped so the regression keeps more rows than columns.
fn long_ar_order(n: usize, p: usize, q: usize, k: usize) -> usize {
    let target = (p + q).max((n as f64).ln().ceil() as usize);
    let cap = n.saturating_sub(k + 2) / 2;
    target.min(cap).max(1)
}

/// Residuals of the regression of y on its first `l` lags plus exog; entries
/// before index `l` are zero placeholders.
fn long_ar_residuals(y: &[f64], x: &DMatrix<f64>, l: usize) -> Vec<f64> {
    let n = y.len();
    let k = x.ncols();
    let rows = n - l;
    let cols = 1 + l + k;
    let mut design = DMatrix::zeros(rows, cols);
    let mut resp = DVector::zeros(rows);
    for (row, t) in (l..n).enumerate() {
        design[(row, 0)] = 1.0;
        for i in 0..l {
            design[(row, 1 + i)] = y[t - 1 - i];
        }
        for kk in 0..k {
            design[(row, 1 + l + kk)] = x[(t, kk)];
        }
        resp[row] = y[t];
    }
    // Rank deficiency is fine here: the min-norm solution still yields the
    // projection residuals, which is all this pass is for.
    let ls = linalg::least_squares(&design, &resp);
    let fitted = design * ls.coefficients;
    let mut eps = vec![0.0; n];
    for (row, t) in (l..n).enumerate() {
        eps[t] = y[t] - fitted[row];
    }
    eps
}
