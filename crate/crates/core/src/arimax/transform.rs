//! Partial-autocorrelation reparameterization of AR coefficients.
//!
//! The Durbin-Levinson recursion maps any vector r with entries in (-1, 1)
//! to the coefficients of a stationary AR(p) polynomial, bijectively. The
//! optimizer works on unconstrained z with r = tanh(z), which keeps every
//! iterate inside the stationary region without explicit constraints.

/// AR coefficients from partial autocorrelations via Durbin-Levinson.
pub fn phi_from_pacf(r: &[f64]) -> Vec<f64> {
    let p = r.len();
    let mut phi = vec![0.0; p];
    for k in 0..p {
        let prev = phi[..k].to_vec();
        phi[k] = r[k];
        for i in 0..k {
            phi[i] = prev[i] - r[k] * prev[k - 1 - i];
        }
    }
    phi
}

/// Inverse of [`phi_from_pacf`]. `None` when the polynomial is on or outside
/// the stationarity boundary (some |r_k| >= 1).
pub fn pacf_from_phi(phi: &[f64]) -> Option<Vec<f64>> {
    let p = phi.len();
    let mut work = phi.to_vec();
    let mut r = vec![0.0; p];
    for k in (0..p).rev() {
        let rk = work[k];
        if !rk.is_finite() || rk.abs() >= 1.0 {
            return None;
        }
        r[k] = rk;
        let denom = 1.0 - rk * rk;
        let cur = work[..k].to_vec();
        for i in 0..k {
            work[i] = (cur[i] + rk * cur[k - 1 - i]) / denom;
        }
    }
    Some(r)
}

/// Jacobian d(phi_i)/d(r_m), built by forward accumulation through the same
/// recursion as [`phi_from_pacf`]. Row i, column m.
pub fn phi_jacobian(r: &[f64]) -> Vec<Vec<f64>> {
    let p = r.len();
    let mut phi = vec![0.0; p];
    let mut jac = vec![vec![0.0; p]; p];
    for k in 0..p {
        let prev_phi = phi[..k].to_vec();
        let prev_jac: Vec<Vec<f64>> = jac[..k].to_vec();
        phi[k] = r[k];
        jac[k] = vec![0.0; p];
        jac[k][k] = 1.0;
        for i in 0..k {
            phi[i] = prev_phi[i] - r[k] * prev_phi[k - 1 - i];
            for m in 0..k {
                jac[i][m] = prev_jac[i][m] - r[k] * prev_jac[k - 1 - i][m];
            }
            jac[i][k] = -prev_phi[k - 1 - i];
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn order_one_and_two_match_closed_forms() {
        assert_eq!(phi_from_pacf(&[0.7]), [0.7]);
        // For p=2: phi1 = r1(1 - r2), phi2 = r2.
        let (r1, r2) = (0.5, -0.3);
        let phi = phi_from_pacf(&[r1, r2]);
        assert_abs_diff_eq!(phi[0], r1 * (1.0 - r2), epsilon = 1e-14);
        assert_abs_diff_eq!(phi[1], r2, epsilon = 1e-14);
    }

    #[test]
    fn round_trip_over_random_pacf_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = rng.random_range(1..=4usize);
            let r: Vec<f64> = (0..p).map(|_| rng.random_range(-0.95..0.95)).collect();
            let phi = phi_from_pacf(&r);
            let back = pacf_from_phi(&phi).expect("stationary by construction");
            for (a, b) in r.iter().zip(&back) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn generated_polynomials_are_stationary() {
        // Companion-matrix eigenvalues must lie strictly inside the unit
        // circle for every pacf vector in (-1, 1)^p.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = rng.random_range(1..=4usize);
            let r: Vec<f64> = (0..p).map(|_| rng.random_range(-0.98..0.98)).collect();
            let phi = phi_from_pacf(&r);
            let companion = DMatrix::from_fn(p, p, |i, j| {
                if i == 0 {
                    phi[j]
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            for ev in companion.complex_eigenvalues().iter() {
                assert!(
                    ev.norm() < 1.0 + 1e-9,
                    "eigenvalue {ev} escaped the unit circle for phi {phi:?}"
                );
            }
        }
    }

    #[test]
    fn non_stationary_ar_is_rejected() {
        assert!(pacf_from_phi(&[1.0]).is_none());
        assert!(pacf_from_phi(&[1.3]).is_none());
        // phi1 + phi2 >= 1 violates stationarity for AR(2).
        assert!(pacf_from_phi(&[0.6, 0.5]).is_none());
        assert!(pacf_from_phi(&[0.5, 0.3]).is_some());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let p = rng.random_range(1..=4usize);
            let r: Vec<f64> = (0..p).map(|_| rng.random_range(-0.9..0.9)).collect();
            let jac = phi_jacobian(&r);
            let h = 1e-7;
            for m in 0..p {
                let mut up = r.clone();
                up[m] += h;
                let mut dn = r.clone();
                dn[m] -= h;
                let phi_up = phi_from_pacf(&up);
                let phi_dn = phi_from_pacf(&dn);
                for i in 0..p {
                    let fd = (phi_up[i] - phi_dn[i]) / (2.0 * h);
                    assert_abs_diff_eq!(jac[i][m], fd, epsilon = 1e-6);
                }
            }
        }
    }
}
