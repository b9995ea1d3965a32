//! Column-by-column completion of a cohort matrix.
//!
//! The unknown staircase region is filled one column at a time, oldest column
//! first. Each column's known prefix (ordered by cohort) is the response
//! series; the exogenous matrix couples it to the previous column through the
//! joint observed-and-predicted series, plus any per-cohort covariates. Each
//! completed column feeds the next, so predictions roll forward across the
//! matrix exactly as the staircase widens.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::arimax::{self, ArimaxError, EstimationConfig, ModelOrder};
use crate::baselines::{rule_predictions, FallbackKind, FallbackPolicy};
use crate::matrix::{CohortCovariates, CohortMatrix, MatrixError};

#[derive(Debug, thiserror::Error)]
pub enum Fill2DError {
    #[error("covariates unusable: {0}")]
    CovariateMissing(#[from] MatrixError),
    #[error("column {u} has no known cells; nothing to fit or fall back on")]
    ColumnUnfittable { u: usize },
    #[error("column {u} read before being filled (previous column incomplete)")]
    PreviousColumnIncomplete { u: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Predicted,
}

/// How one column's unknown cells were produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnMethod {
    /// Nothing to predict in this column.
    Complete,
    Arimax { order: ModelOrder, converged: bool },
    /// A per-column rule: either a baseline model or the fallback taken when
    /// the full model's preconditions fail (the reason says which).
    Rule { kind: FallbackKind, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiagnostics {
    pub u: usize,
    pub n_known: usize,
    pub n_predicted: usize,
    pub method: ColumnMethod,
    /// Predictions clamped up to zero (revenue is non-negative).
    pub floored: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Forecast2DConfig {
    /// Column count used when the CLI constructs the matrix; fill_matrix
    /// itself always works over the matrix's own width.
    pub horizon_count: usize,
    pub estimation: EstimationConfig,
    pub covariate_names: Vec<String>,
    pub fallback: FallbackPolicy,
    pub include_prev_column: bool,
}

impl Default for Forecast2DConfig {
    fn default() -> Self {
        Self {
            horizon_count: 12,
            estimation: EstimationConfig::default(),
            covariate_names: Vec::new(),
            fallback: FallbackPolicy::naive(),
            include_prev_column: true,
        }
    }
}

/// A cohort matrix plus values for its unknown region.
///
/// Produced complete by [`fill_matrix`] and the baseline fills (every cell
/// holds a finite value); also usable as a partial container for predictions
/// imported from external models.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledMatrix {
    base: CohortMatrix,
    values: Vec<Option<f64>>,
    columns: Vec<ColumnDiagnostics>,
}

impl FilledMatrix {
    /// A working copy with observed cells populated and everything else
    /// empty.
    pub fn begin(m: &CohortMatrix) -> Self {
        let t_count = m.n_cohorts();
        let u_count = m.horizon_count();
        let mut values = Vec::with_capacity(t_count * u_count);
        for t in 0..t_count {
            for u in 0..u_count {
                values.push(m.value(t, u));
            }
        }
        Self {
            base: m.clone(),
            values,
            columns: Vec::new(),
        }
    }

    pub fn base(&self) -> &CohortMatrix {
        &self.base
    }

    pub fn value(&self, t: usize, u: usize) -> Option<f64> {
        self.values[t * self.base.horizon_count() + u]
    }

    pub fn provenance(&self, t: usize, u: usize) -> Provenance {
        if self.base.value(t, u).is_some() {
            Provenance::Observed
        } else {
            Provenance::Predicted
        }
    }

    /// Months ahead of the prediction month, for predicted cells (>= 1).
    pub fn horizon(&self, t: usize, u: usize) -> Option<u32> {
        match self.provenance(t, u) {
            Provenance::Observed => None,
            Provenance::Predicted => {
                let event = self.base.cohort(t).add_months(u as i32);
                Some((self.base.prediction_month().months_until(event) + 1) as u32)
            }
        }
    }

    /// Inserts a prediction into an unknown cell. Observed cells cannot be
    /// overwritten; that would break the bit-preservation guarantee.
    pub fn set_predicted(&mut self, t: usize, u: usize, v: f64) -> Result<(), Fill2DError> {
        if self.base.value(t, u).is_some() {
            return Err(Fill2DError::CovariateMissing(MatrixError::ConflictingValue {
                cohort: self.base.cohort(t),
                u,
                existing: self.base.value(t, u).unwrap(),
                supplied: v,
            }));
        }
        self.values[t * self.base.horizon_count() + u] = Some(v);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_some())
    }

    pub fn column_diagnostics(&self) -> &[ColumnDiagnostics] {
        &self.columns
    }

    /// Exogenous rows for column `u`: the previous column's joint
    /// observed-and-predicted value first (when enabled), then the covariates
    /// in `covariate_names` order. Errors if any required previous-column
    /// cell has not been filled yet.
    pub fn build_exog_column(
        &self,
        u: usize,
        rows: &[usize],
        cov: &CohortCovariates,
        cfg: &Forecast2DConfig,
    ) -> Result<DMatrix<f64>, Fill2DError> {
        let cov_idx = cov.resolve(&cfg.covariate_names)?;
        let k = usize::from(cfg.include_prev_column) + cov_idx.len();
        let mut x = DMatrix::zeros(rows.len(), k);
        for (i, &t) in rows.iter().enumerate() {
            let mut col = 0;
            if cfg.include_prev_column {
                if u == 0 {
                    return Err(Fill2DError::PreviousColumnIncomplete { u });
                }
                let prev = self
                    .value(t, u - 1)
                    .ok_or(Fill2DError::PreviousColumnIncomplete { u })?;
                x[(i, col)] = prev;
                col += 1;
            }
            let vals = cov.values_for(self.base.cohort(t), &cov_idx)?;
            for v in vals {
                x[(i, col)] = v;
                col += 1;
            }
        }
        Ok(x)
    }

    /// Wide CSV with every cell populated (cells never filled stay empty).
    pub fn wide_csv_string(&self) -> String {
        let u_count = self.base.horizon_count();
        let mut out = String::from("cohort_month");
        for u in 0..u_count {
            write!(out, ",u{u}").unwrap();
        }
        out.push('\n');
        for t in 0..self.base.n_cohorts() {
            write!(out, "{}", self.base.cohort(t)).unwrap();
            for u in 0..u_count {
                match self.value(t, u) {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Per-cell provenance: `cohort_month,u,provenance,horizon,fallback_used`.
    /// Horizon is empty for observed cells; fallback_used names the rule that
    /// produced the column's predictions, empty when the full model did.
    pub fn provenance_csv_string(&self) -> String {
        let mut rule_by_column: Vec<&str> = vec![""; self.base.horizon_count()];
        for c in &self.columns {
            if let ColumnMethod::Rule { kind, .. } = &c.method {
                rule_by_column[c.u] = kind.name();
            }
        }
        let mut out = String::from("cohort_month,u,provenance,horizon,fallback_used\n");
        for t in 0..self.base.n_cohorts() {
            for (u, column_rule) in rule_by_column.iter().enumerate() {
                let (prov, horizon, rule) = match self.provenance(t, u) {
                    Provenance::Observed => ("OBSERVED", String::new(), ""),
                    Provenance::Predicted => (
                        "PREDICTED",
                        self.horizon(t, u).unwrap().to_string(),
                        *column_rule,
                    ),
                };
                writeln!(out, "{},{u},{prov},{horizon},{rule}", self.base.cohort(t)).unwrap();
            }
        }
        out
    }

    pub fn write_wide_csv(&self, path: &Path) -> Result<(), MatrixError> {
        std::fs::write(path, self.wide_csv_string())?;
        Ok(())
    }

    pub fn write_provenance_csv(&self, path: &Path) -> Result<(), MatrixError> {
        std::fs::write(path, self.provenance_csv_string())?;
        Ok(())
    }

    pub(crate) fn push_column_diagnostics(&mut self, d: ColumnDiagnostics) {
        self.columns.push(d);
    }

    /// Undoes input scaling: predicted cells are multiplied by `factor`,
    /// observed cells are restored bit-exactly from `original`, which must
    /// be the unscaled source matrix with the same shape. Column
    /// diagnostics carry over unchanged.
    pub fn unscaled_into(&self, original: &CohortMatrix, factor: f64) -> FilledMatrix {
        assert_eq!(original.cohorts(), self.base.cohorts(), "cohort layout differs");
        assert_eq!(original.horizon_count(), self.base.horizon_count());
        assert_eq!(original.prediction_month(), self.base.prediction_month());
        let mut out = FilledMatrix::begin(original);
        for t in 0..original.n_cohorts() {
            for u in 0..original.horizon_count() {
                if original.value(t, u).is_none() {
                    if let Some(v) = self.value(t, u) {
                        out.set_predicted(t, u, v * factor)
                            .expect("unknown cells are writable");
                    }
                }
            }
        }
        out.columns = self.columns.clone();
        out
    }
}

/// Fills every unknown cell, iterating columns in ascending order so each
/// column is complete before the next one reads it. Columns where the full
/// model cannot be estimated fall back to the configured per-column rule;
/// a column with zero known cells is unfittable and aborts the fill.
pub fn fill_matrix(
    m: &CohortMatrix,
    cov: &CohortCovariates,
    cfg: &Forecast2DConfig,
) -> Result<FilledMatrix, Fill2DError> {
    let cov_idx = cov.resolve(&cfg.covariate_names)?;
    // Covariates must cover every cohort before any work starts; a hole in
    // the middle of a fill would leave partial state.
    for t in 0..m.n_cohorts() {
        cov.values_for(m.cohort(t), &cov_idx)?;
    }

    let mut filled = FilledMatrix::begin(m);
    for u in 0..m.horizon_count() {
        let col = m.column_series(u).expect("column index in range");
        let n_known = col.known.len();
        if col.unknown_rows.is_empty() {
            filled.push_column_diagnostics(ColumnDiagnostics {
                u,
                n_known,
                n_predicted: 0,
                method: ColumnMethod::Complete,
                floored: 0,
                notes: Vec::new(),
            });
            continue;
        }
        if n_known == 0 {
            return Err(Fill2DError::ColumnUnfittable { u });
        }

        let mut notes = Vec::new();
        let h = col.unknown_rows.len();
        // Column 0 has no previous column to couple to; its unknowns (a
        // degenerate case) go straight to the fallback rule.
        let attempt = if u == 0 {
            Err("column 0 has no previous column".to_string())
        } else {
            let known_rows: Vec<usize> = (0..n_known).collect();
            let x_fit = filled.build_exog_column(u, &known_rows, cov, cfg)?;
            let x_future = filled.build_exog_column(u, &col.unknown_rows, cov, cfg)?;
            fit_and_forecast(&col.known, &x_fit, &x_future, h, &cfg.estimation)
                .map_err(|e| e.to_string())
        };

        let (mut predictions, method) = match attempt {
            Ok((fit, predictions)) => {
                notes.extend(fit.diagnostics.iter().cloned());
                (
                    predictions,
                    ColumnMethod::Arimax {
                        order: fit.order,
                        converged: fit.converged,
                    },
                )
            }
            Err(reason) => {
                let kind = cfg.fallback.effective_kind(n_known);
                let predictions = rule_predictions(kind, &col.known, &col.unknown_rows);
                (predictions, ColumnMethod::Rule { kind, reason })
            }
        };

        let mut floored = 0;
        for v in predictions.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                floored += 1;
            }
        }
        if floored > 0 {
            notes.push(format!("floored {floored} negative predictions to zero"));
        }

        for (&t, &v) in col.unknown_rows.iter().zip(&predictions) {
            filled
                .set_predicted(t, u, v)
                .expect("unknown cells are writable");
        }
        filled.push_column_diagnostics(ColumnDiagnostics {
            u,
            n_known,
            n_predicted: h,
            method,
            floored,
            notes,
        });
    }
    Ok(filled)
}

fn fit_and_forecast(
    y: &[f64],
    x_fit: &DMatrix<f64>,
    x_future: &DMatrix<f64>,
    h: usize,
    cfg: &EstimationConfig,
) -> Result<(arimax::ArimaxFit, Vec<f64>), ArimaxError> {
    let (_, fit) = arimax::select_and_fit(y, x_fit, cfg)?;
    let predictions = arimax::forecast(&fit, y, x_future, h)?;
    Ok((fit, predictions))
}
