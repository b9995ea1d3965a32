//! Thin wrapper over nalgebra's SVD for the least-squares solves used by the
//! estimators and baselines.

use nalgebra::{DMatrix, DVector};

pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    /// Numerical rank of the design matrix; callers use it to detect
    /// collinear columns.
    pub rank: usize,
}

/// Minimum-norm solution of `x b ~ y`. Rank-deficient designs are handled by
/// truncating small singular values, so collinear columns yield the
/// minimum-norm coefficient vector instead of an error.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> LeastSquares {
    assert_eq!(x.nrows(), y.len(), "design and response row counts differ");
    if x.ncols() == 0 || x.nrows() == 0 {
        return LeastSquares {
            coefficients: DVector::zeros(x.ncols()),
            rank: 0,
        };
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = x.nrows().max(x.ncols()) as f64 * f64::EPSILON * smax.max(f64::MIN_POSITIVE);
    let rank = svd.rank(tol);
    let coefficients = svd.solve(y, tol).expect("svd did not retain u/v");
    LeastSquares { coefficients, rank }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recovers_exact_coefficients() {
        // y = 2 + 3x over x = 0..5, no noise.
        let n = 6;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(n, |i, _| 2.0 + 3.0 * i as f64);
        let ls = least_squares(&x, &y);
        assert_eq!(ls.rank, 2);
        assert_abs_diff_eq!(ls.coefficients[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ls.coefficients[1], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn matches_normal_equations_on_noisy_data() {
        // Independent oracle: solve (X'X) b = X'y directly.
        let x = DMatrix::from_row_slice(
            5,
            2,
            &[1.0, 0.3, 1.0, 1.1, 1.0, 1.9, 1.0, 3.2, 1.0, 4.1],
        );
        let y = DVector::from_column_slice(&[0.7, 2.9, 4.1, 7.2, 8.6]);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let oracle = xtx.lu().solve(&xty).unwrap();
        let ls = least_squares(&x, &y);
        assert_abs_diff_eq!(ls.coefficients[0], oracle[0], epsilon = 1e-9);
        assert_abs_diff_eq!(ls.coefficients[1], oracle[1], epsilon = 1e-9);
    }

    #[test]
    fn reports_rank_deficiency_and_still_solves() {
        // Second column duplicates the first.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let y = DVector::from_column_slice(&[2.0, 4.0, 6.0, 8.0]);
        let ls = least_squares(&x, &y);
        assert_eq!(ls.rank, 1);
        // Minimum-norm split: both coefficients equal 1.
        assert_abs_diff_eq!(ls.coefficients[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ls.coefficients[1], 1.0, epsilon = 1e-9);
        // Fitted values still reproduce y.
        let fitted = &x * &ls.coefficients;
        assert_abs_diff_eq!((fitted - y).norm(), 0.0, epsilon = 1e-9);
    }
}
