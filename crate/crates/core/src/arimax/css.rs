//! Conditional-sum-of-squares objective with an analytic gradient.
//!
//! Parameters are packed as `[mu, phi_1..phi_p, theta_1..theta_q,
//! beta_1..beta_K]`. Residuals follow
//!
//! ```text
//! e_t = y_t - mu - sum_i phi_i y_{t-i} - sum_k beta_k x_{k,t} + sum_j theta_j e_{t-j}
//! ```
//!
//! with pre-sample residuals fixed at zero, accumulated over t = p..n-1 so
//! every AR lag refers to a real observation. The gradient runs through the
//! same recursion, carrying d(e_t)/d(param) forward alongside e_t.

use nalgebra::DMatrix;

use super::ArimaxError;

pub struct CssEval {
    pub sse: f64,
    pub gradient: Vec<f64>,
    /// Residuals aligned to the series: first p entries are zero padding.
    pub residuals: Vec<f64>,
    /// Number of residuals entering the sum (n - p).
    pub n_eff: usize,
}

pub fn css_objective(
    params: &[f64],
    y: &[f64],
    x: &DMatrix<f64>,
    p: usize,
    q: usize,
) -> Result<CssEval, ArimaxError> {
    let n = y.len();
    let n_par = params.len();
    if n_par < 1 + p + q {
        return Err(ArimaxError::DimensionMismatch(format!(
            "{n_par} params cannot hold mu plus {p} AR and {q} MA terms"
        )));
    }
    let k = n_par - 1 - p - q;
    if x.ncols() != k || x.nrows() != n {
        return Err(ArimaxError::DimensionMismatch(format!(
            "exog is {}x{}, expected {n}x{k}",
            x.nrows(),
            x.ncols()
        )));
    }
    if n <= p {
        return Err(ArimaxError::SeriesTooShort { len: n, d: p });
    }

    let mu = params[0];
    let phi = &params[1..1 + p];
    let theta = &params[1 + p..1 + p + q];
    let beta = &params[1 + p + q..];

    let mut residuals = vec![0.0; n];
    // d(e_t)/d(param), row per t; pre-sample rows stay zero.
    let mut deriv = vec![vec![0.0; n_par]; n];
    let mut sse = 0.0;
    let mut gradient = vec![0.0; n_par];

    for t in p..n {
        let mut e = y[t] - mu;
        for (i, &ph) in phi.iter().enumerate() {
            e -= ph * y[t - 1 - i];
        }
        for (kk, &b) in beta.iter().enumerate() {
            e -= b * x[(t, kk)];
        }
        let mut g = vec![0.0; n_par];
        g[0] = -1.0;
        for i in 0..p {
            g[1 + i] = -y[t - 1 - i];
        }
        for kk in 0..k {
            g[1 + p + q + kk] = -x[(t, kk)];
        }
        for (j, &th) in theta.iter().enumerate() {
            let Some(s) = t.checked_sub(1 + j) else { continue };
            e += th * residuals[s];
            g[1 + p + j] += residuals[s];
            for m in 0..n_par {
                g[m] += th * deriv[s][m];
            }
        }
        if !e.is_finite() {
            return Err(ArimaxError::NonFiniteValue);
        }
        sse += e * e;
        for m in 0..n_par {
            gradient[m] += 2.0 * e * g[m];
        }
        residuals[t] = e;
        deriv[t] = g;
    }
    if !sse.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(ArimaxError::NonFiniteValue);
    }

    Ok(CssEval {
        sse,
        gradient,
        residuals,
        n_eff: n - p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn no_exog(n: usize) -> DMatrix<f64> {
        DMatrix::zeros(n, 0)
    }

    #[test]
    fn mean_only_model_reduces_to_sum_of_squared_deviations() {
        let y = [2.0, 4.0, 3.0, 5.0, 6.0];
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let at_mean = css_objective(&[mean], &y, &no_exog(5), 0, 0).unwrap();
        let expected: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert_abs_diff_eq!(at_mean.sse, expected, epsilon = 1e-12);
        // The mean is the minimizer: gradient vanishes there and the sse
        // rises when mu moves.
        assert_abs_diff_eq!(at_mean.gradient[0], 0.0, epsilon = 1e-10);
        let off = css_objective(&[mean + 0.3], &y, &no_exog(5), 0, 0).unwrap();
        assert!(off.sse > at_mean.sse);
    }

    #[test]
    fn ar1_css_matches_ols_objective() {
        // For p=1, q=0 the conditional objective is exactly the least-squares
        // objective of y_t on y_{t-1}; check both value and minimizer against
        // the closed form.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut y = vec![0.0_f64; 60];
        for t in 1..60 {
            y[t] = 0.5 * y[t - 1] + rng.random_range(-1.0..1.0);
        }
        // Closed-form OLS of y_t on [1, y_{t-1}], t = 1..n.
        let n = y.len();
        let rows = n - 1;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for t in 1..n {
            let (xv, yv) = (y[t - 1], y[t]);
            sx += xv;
            sy += yv;
            sxx += xv * xv;
            sxy += xv * yv;
        }
        let m = rows as f64;
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        let intercept = (sy - slope * sx) / m;

        let eval = css_objective(&[intercept, slope], &y, &no_exog(n), 1, 0).unwrap();
        let ols_sse: f64 = (1..n)
            .map(|t| {
                let r = y[t] - intercept - slope * y[t - 1];
                r * r
            })
            .sum();
        assert_abs_diff_eq!(eval.sse, ols_sse, epsilon = 1e-9);
        // At the OLS solution the gradient is zero in both coordinates.
        assert_abs_diff_eq!(eval.gradient[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(eval.gradient[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..30 {
            let p = rng.random_range(0..=3usize);
            let q = rng.random_range(0..=3usize);
            let k = rng.random_range(0..=3usize);
            let n = rng.random_range(20..60usize);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
            let n_par = 1 + p + q + k;
            let params: Vec<f64> = (0..n_par)
                .map(|i| {
                    if i >= 1 && i < 1 + p + q {
                        rng.random_range(-0.6..0.6)
                    } else {
                        rng.random_range(-1.5..1.5)
                    }
                })
                .collect();

            let eval = css_objective(&params, &y, &x, p, q).unwrap();
            for m in 0..n_par {
                let h = 1e-6 * (1.0 + params[m].abs());
                let mut up = params.clone();
                up[m] += h;
                let mut dn = params.clone();
                dn[m] -= h;
                let f_up = css_objective(&up, &y, &x, p, q).unwrap().sse;
                let f_dn = css_objective(&dn, &y, &x, p, q).unwrap().sse;
                let fd = (f_up - f_dn) / (2.0 * h);
                let denom = fd.abs().max(eval.gradient[m].abs()).max(1e-8);
                let rel = (eval.gradient[m] - fd).abs() / denom;
                assert!(
                    rel < 1e-5,
                    "case {case} (p={p} q={q} k={k}) param {m}: analytic {} vs fd {fd}",
                    eval.gradient[m]
                );
            }
        }
    }

    #[test]
    fn residuals_pad_presample_with_zeros() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let eval = css_objective(&[0.0, 1.0], &y, &no_exog(4), 1, 0).unwrap();
        assert_eq!(eval.residuals.len(), 4);
        assert_eq!(eval.residuals[0], 0.0);
        assert_eq!(eval.n_eff, 3);
        // e_t = y_t - y_{t-1} = 1 for every t >= 1.
        assert_eq!(&eval.residuals[1..], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn divergent_parameters_are_flagged() {
        let n = 200;
        let y: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        // theta far outside the invertible region makes the recursion blow up.
        let err = css_objective(&[0.0, 80.0], &y, &no_exog(n), 0, 1);
        assert!(matches!(err, Err(ArimaxError::NonFiniteValue)));
    }
}
