//! ARIMAX estimation and forecasting for one univariate series with
//! exogenous regressors.
//!
//! Estimation minimizes the conditional sum of squares (pre-sample residuals
//! zero) with Hannan-Rissanen start values and a quasi-Newton refinement.
//! With stationarity enforcement on (the default), AR coefficients are
//! optimized through a partial-autocorrelation reparameterization so every
//! iterate stays stationary. Order selection scans a small grid and picks the
//! AIC minimizer.

mod css;
mod diff;
mod init;
mod optim;
mod transform;

pub use css::{css_objective, CssEval};
pub use diff::{difference, undifference};

use nalgebra::DMatrix;

const SIGMA2_FLOOR: f64 = 1e-12;
/// |pacf| beyond this counts as sitting on the stationarity boundary.
const BOUNDARY_PACF: f64 = 0.995;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ArimaxError {
    #[error("series too short: length {len} with differencing order {d}")]
    SeriesTooShort { len: usize, d: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in residual recursion (divergent parameters)")]
    NonFiniteValue,
    #[error("insufficient data: {n} observations for {params} parameters (required ratio {ratio})")]
    InsufficientData { n: usize, params: usize, ratio: f64 },
    #[error("singular design: collinear regressor columns (rank {rank} of {cols})")]
    SingularDesign { rank: usize, cols: usize },
    #[error("insufficient history: need {need} trailing values, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("no feasible model order for {n} observations")]
    NoFeasibleOrder { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ModelOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }
}

impl std::fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

/// Grid scanned by [`select_order`]: cohort-axis series are short, so only
/// parsimonious orders are worth considering.
pub fn default_order_grid() -> Vec<ModelOrder> {
    let mut grid = Vec::new();
    for p in 0..=2 {
        for d in 0..=1 {
            for q in 0..=1 {
                grid.push(ModelOrder::new(p, d, q));
            }
        }
    }
    grid
}

#[derive(Debug, Clone)]
pub struct EstimationConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub order_grid: Vec<ModelOrder>,
    /// Keep AR estimates stationary and MA estimates invertible by
    /// optimizing in partial-autocorrelation space. Without this, CSS can
    /// drive MA coefficients past the unit circle, where the residual
    /// recursion is explosive and the in-sample fit arbitrarily good.
    pub enforce_stationarity: bool,
    /// Observations (after differencing) required per parameter before a fit
    /// is attempted.
    pub min_obs_per_param: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            order_grid: default_order_grid(),
            enforce_stationarity: true,
            min_obs_per_param: 3.0,
        }
    }
}

/// A fitted model. `beta` is ordered like the columns of the exogenous
/// matrix passed to [`fit`]. `residuals` are in-sample one-step residuals in
/// differenced space, zero-padded over the first p entries; [`forecast`]
/// consumes them for the MA feedback, so they refer to the series the model
/// was fitted on.
#[derive(Debug, Clone)]
pub struct ArimaxFit {
    pub order: ModelOrder,
    pub mu: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub n_obs: usize,
    pub aic: f64,
    pub converged: bool,
    pub diagnostics: Vec<String>,
    pub residuals: Vec<f64>,
}

impl ArimaxFit {
    pub fn param_count(&self) -> usize {
        1 + self.phi.len() + self.theta.len() + self.beta.len()
    }
}

/// Fits an ARIMAX(p,d,q) model of `y` on exogenous columns `x` (one row per
/// observation of `y`; regressors enter the differenced equation directly).
pub fn fit(
    y: &[f64],
    x: &DMatrix<f64>,
    order: ModelOrder,
    cfg: &EstimationConfig,
) -> Result<ArimaxFit, ArimaxError> {
    let ModelOrder { p, d, q } = order;
    let k = x.ncols();
    if x.nrows() != y.len() {
        return Err(ArimaxError::DimensionMismatch(format!(
            "exog has {} rows for {} observations",
            x.nrows(),
            y.len()
        )));
    }
    let w = difference(y, d)?;
    let xr = x.rows(d, y.len() - d).into_owned();
    let n = w.len();
    let n_par = 1 + p + q + k;
    if (n as f64) < cfg.min_obs_per_param * n_par as f64 {
        return Err(ArimaxError::InsufficientData {
            n,
            params: n_par,
            ratio: cfg.min_obs_per_param,
        });
    }
    if n <= p {
        return Err(ArimaxError::SeriesTooShort { len: n, d: p });
    }

    let init = init::start_values(&w, &xr, p, q)?;
    let mut diagnostics = Vec::new();

    let constrain = cfg.enforce_stationarity && p + q > 0;
    let (opt, natural) = if constrain {
        let mut x0 = init.clone();
        for (i, r) in stationary_pacf(&init[1..1 + p]).iter().enumerate() {
            x0[1 + i] = r.atanh();
        }
        for (j, r) in stationary_pacf(&init[1 + p..1 + p + q]).iter().enumerate() {
            x0[1 + p + j] = r.atanh();
        }
        let opt = optim::minimize(
            &x0,
            |v| {
                let nat = natural_from_z(v, p, q);
                let eval = css_objective(&nat, &w, &xr, p, q).ok()?;
                Some((eval.sse, grad_to_z(&eval.gradient, v, p, q)))
            },
            cfg.gradient_tolerance,
            cfg.max_iterations,
        );
        let nat = natural_from_z(&opt.x, p, q);
        (opt, nat)
    } else {
        // Shrink AR/MA start values toward zero until the recursion is
        // computable (wild starts can overflow it).
        let mut x0 = init.clone();
        for _ in 0..100 {
            if css_objective(&x0, &w, &xr, p, q).is_ok() {
                break;
            }
            for v in x0[1..1 + p + q].iter_mut() {
                *v *= 0.5;
            }
        }
        let opt = optim::minimize(
            &x0,
            |v| {
                let eval = css_objective(v, &w, &xr, p, q).ok()?;
                Some((eval.sse, eval.gradient))
            },
            cfg.gradient_tolerance,
            cfg.max_iterations,
        );
        let nat = opt.x.clone();
        (opt, nat)
    };

    let eval = css_objective(&natural, &w, &xr, p, q)?;
    let mut converged = opt.converged;
    if !converged {
        diagnostics.push(format!(
            "no convergence: gradient norm {:.3e}, objective {:.6e} after {} iterations",
            opt.grad_norm, opt.value, opt.iterations
        ));
    }
    if constrain {
        let r: Vec<f64> = opt.x[1..1 + p].iter().map(|&z| z_to_pacf(z)).collect();
        if r.iter().any(|v| v.abs() > BOUNDARY_PACF) {
            converged = false;
            diagnostics.push(format!(
                "AR estimate on the stationarity boundary (pacf {r:?})"
            ));
        }
        let s: Vec<f64> = opt.x[1 + p..1 + p + q]
            .iter()
            .map(|&z| z_to_pacf(z))
            .collect();
        if s.iter().any(|v| v.abs() > BOUNDARY_PACF) {
            converged = false;
            diagnostics.push(format!(
                "MA estimate on the invertibility boundary (pacf {s:?})"
            ));
        }
    }

    let n_eff = eval.n_eff;
    let dof = n_eff.saturating_sub(n_par).max(1);
    let sigma2 = (eval.sse / dof as f64).max(SIGMA2_FLOOR);
    let aic = n_eff as f64 * sigma2.ln() + 2.0 * (n_par as f64 + 1.0);

    Ok(ArimaxFit {
        order,
        mu: natural[0],
        phi: natural[1..1 + p].to_vec(),
        theta: natural[1 + p..1 + p + q].to_vec(),
        beta: natural[1 + p + q..].to_vec(),
        sigma2,
        n_obs: n_eff,
        aic,
        converged,
        diagnostics,
        residuals: eval.residuals,
    })
}

/// tanh saturates to exactly +-1.0 in floating point for |z| above ~19;
/// cap the pacf just inside the open interval so the AR polynomial stays
/// strictly stationary no matter how far the optimizer walks.
const PACF_CAP: f64 = 1.0 - 1e-9;

fn z_to_pacf(z: f64) -> f64 {
    z.tanh().clamp(-PACF_CAP, PACF_CAP)
}

/// Both coefficient blocks share the reparameterization: the AR polynomial
/// 1 - sum phi_i B^i is stationary exactly when the MA polynomial of the
/// same form is invertible, so one transform covers both.
fn natural_from_z(v: &[f64], p: usize, q: usize) -> Vec<f64> {
    let mut nat = v.to_vec();
    for (at, len) in [(1, p), (1 + p, q)] {
        let r: Vec<f64> = v[at..at + len].iter().map(|&z| z_to_pacf(z)).collect();
        nat[at..at + len].copy_from_slice(&transform::phi_from_pacf(&r));
    }
    nat
}

/// Chain rule from the natural gradient to z-space: through the
/// Durbin-Levinson Jacobian, then through tanh, per coefficient block.
fn grad_to_z(g_nat: &[f64], z: &[f64], p: usize, q: usize) -> Vec<f64> {
    let mut g = g_nat.to_vec();
    for (at, len) in [(1, p), (1 + p, q)] {
        let r: Vec<f64> = z[at..at + len].iter().map(|&v| z_to_pacf(v)).collect();
        let jac = transform::phi_jacobian(&r);
        for m in 0..len {
            let mut acc = 0.0;
            for i in 0..len {
                acc += g_nat[at + i] * jac[i][m];
            }
            g[at + m] = acc * (1.0 - r[m] * r[m]);
        }
    }
    g
}

/// Projects arbitrary AR or MA start values into the open region where the
/// block's polynomial is stationary (respectively invertible).
fn stationary_pacf(coeffs: &[f64]) -> Vec<f64> {
    let mut scaled = coeffs.to_vec();
    for _ in 0..200 {
        if let Some(r) = transform::pacf_from_phi(&scaled) {
            return r.iter().map(|v| v.clamp(-0.98, 0.98)).collect();
        }
        for v in scaled.iter_mut() {
            *v *= 0.9;
        }
    }
    vec![0.0; coeffs.len()]
}

/// Multi-step forecast: iterated one-step predictions in differenced space
/// with future innovations at zero, then undifferenced to level space.
///
/// `y_history` must be the level series the model was fitted on (the stored
/// in-sample residuals feed the MA terms of the first q steps). `x_future`
/// has one row per step, columns matching the fit's design.
pub fn forecast(
    fit: &ArimaxFit,
    y_history: &[f64],
    x_future: &DMatrix<f64>,
    h: usize,
) -> Result<Vec<f64>, ArimaxError> {
    let ModelOrder { p, d, q } = fit.order;
    let k = fit.beta.len();
    if x_future.ncols() != k {
        return Err(ArimaxError::DimensionMismatch(format!(
            "future exog has {} columns, fit used {k}",
            x_future.ncols()
        )));
    }
    if x_future.nrows() != h {
        return Err(ArimaxError::DimensionMismatch(format!(
            "future exog has {} rows for horizon {h}",
            x_future.nrows()
        )));
    }
    if h == 0 {
        return Ok(Vec::new());
    }
    let n_hist = y_history.len();
    if n_hist < d + p || n_hist < d.max(1) {
        return Err(ArimaxError::InsufficientHistory {
            need: (d + p).max(1),
            have: n_hist,
        });
    }

    let mut path = if n_hist == d {
        Vec::new()
    } else {
        difference(y_history, d)?
    };
    let offset = path.len();
    let mut diff_forecasts = Vec::with_capacity(h);
    for s in 0..h {
        let tau = offset + s;
        let mut v = fit.mu;
        for i in 0..p {
            v += fit.phi[i] * path[tau - 1 - i];
        }
        for kk in 0..k {
            v += fit.beta[kk] * x_future[(s, kk)];
        }
        for j in 0..q {
            let Some(idx) = tau.checked_sub(1 + j) else {
                continue;
            };
            if idx < fit.residuals.len() {
                v -= fit.theta[j] * fit.residuals[idx];
            }
        }
        path.push(v);
        diff_forecasts.push(v);
    }
    undifference(&diff_forecasts, &y_history[n_hist - d..])
}

/// Scans the order grid, fitting each feasible candidate, and returns the
/// AIC minimizer (ties: smaller p+q+d, then smaller q). Candidates whose
/// preconditions fail are skipped; if none survive the caller must fall back.
pub fn select_and_fit(
    y: &[f64],
    x: &DMatrix<f64>,
    cfg: &EstimationConfig,
) -> Result<(ModelOrder, ArimaxFit), ArimaxError> {
    let mut best: Option<(ModelOrder, ArimaxFit)> = None;
    for &cand in &cfg.order_grid {
        let Ok(f) = fit(y, x, cand, cfg) else { continue };
        if !f.aic.is_finite() {
            continue;
        }
        let replace = match &best {
            None => true,
            Some((bo, bf)) => {
                let a = (f.aic, cand.p + cand.q + cand.d, cand.q, cand.p, cand.d);
                let b = (bf.aic, bo.p + bo.q + bo.d, bo.q, bo.p, bo.d);
                a.partial_cmp(&b) == Some(std::cmp::Ordering::Less)
            }
        };
        if replace {
            best = Some((cand, f));
        }
    }
    best.ok_or(ArimaxError::NoFeasibleOrder { n: y.len() })
}

pub fn select_order(
    y: &[f64],
    x: &DMatrix<f64>,
    cfg: &EstimationConfig,
) -> Result<ModelOrder, ArimaxError> {
    select_and_fit(y, x, cfg).map(|(order, _)| order)
}
