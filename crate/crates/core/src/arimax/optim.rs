//! Quasi-Newton minimizer: BFGS with Armijo backtracking.
//!
//! The objective returns `None` where it is undefined (overflowing residual
//! recursions); the line search treats such points as infinitely bad and
//! backtracks, so iterates stay in the computable region.

use nalgebra::{DMatrix, DVector};

pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f`, which returns `(value, gradient)` or `None` when
/// undefined. Stops when the gradient norm drops below `tol` or after
/// `max_iter` iterations, returning the best point seen either way.
pub fn minimize<F>(x0: &[f64], f: F, tol: f64, max_iter: usize) -> OptimResult
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let Some((mut fx, g0)) = f(x.as_slice()) else {
        return OptimResult {
            x: x0.to_vec(),
            value: f64::INFINITY,
            grad_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    };
    let mut grad = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut best = (x.clone(), fx, grad.norm());
    let mut reset_done = false;

    let mut iter = 0;
    while iter < max_iter {
        let gnorm = grad.norm();
        if gnorm < tol {
            return OptimResult {
                x: x.as_slice().to_vec(),
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                converged: true,
            };
        }

        let mut dir = -(&h * &grad);
        if dir.dot(&grad) >= 0.0 {
            // Curvature information went bad; fall back to steepest descent.
            h = DMatrix::identity(n, n);
            dir = -grad.clone();
        }

        // Armijo backtracking.
        let slope = dir.dot(&grad);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-14 {
            let cand = &x + alpha * &dir;
            if let Some((fc, gc)) = f(cand.as_slice()) {
                if fc <= fx + 1e-4 * alpha * slope {
                    accepted = Some((cand, fc, DVector::from_vec(gc)));
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if reset_done {
                break; // no descent even along -grad: numerically stuck
            }
            h = DMatrix::identity(n, n);
            reset_done = true;
            iter += 1;
            continue;
        };
        reset_done = false;

        let s = &x_new - &x;
        let yv = &g_new - &grad;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            // BFGS inverse-Hessian update.
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            h += (sy + yhy) * rho * rho * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }

        x = x_new;
        fx = f_new;
        grad = g_new;
        if fx < best.1 {
            best = (x.clone(), fx, grad.norm());
        }
        iter += 1;
    }

    // Out of iterations (or stuck): report the best point seen.
    let (bx, bf, bg) = best;
    let converged = bg < tol;
    OptimResult {
        x: bx.as_slice().to_vec(),
        value: bf,
        grad_norm: bg,
        iterations: iter,
        converged,
    }
}
