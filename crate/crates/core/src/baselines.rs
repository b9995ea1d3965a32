//! Reference fills for the unknown region: per-column carry-forward, drift,
//! and a per-column linear trend with optional covariates. These double as
//! the fallback rules the full model degrades to when a column is too thin
//! to estimate.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::forecaster2d::{ColumnDiagnostics, ColumnMethod, FilledMatrix};
use crate::linalg::least_squares;
use crate::matrix::{CohortCovariates, CohortMatrix, MatrixError};
use crate::month::CohortMonth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackKind {
    Naive,
    ColumnMean,
    Linear,
    /// Baseline-only; not admissible as a fallback policy.
    Drift,
}

impl FallbackKind {
    pub fn name(self) -> &'static str {
        match self {
            FallbackKind::Naive => "naive",
            FallbackKind::ColumnMean => "column_mean",
            FallbackKind::Linear => "linear",
            FallbackKind::Drift => "drift",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("fallback policy cannot use kind '{0}'; allowed: naive, column_mean, linear")]
    KindNotAllowed(&'static str),
    #[error("fallback kind '{kind}' needs min_rows >= {needed}, got {got}")]
    MinRowsTooSmall {
        kind: &'static str,
        needed: usize,
        got: usize,
    },
}

/// What to do with a column the full model cannot handle, and how many known
/// rows the rule itself needs before degrading to naive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackPolicy {
    pub kind: FallbackKind,
    pub min_rows: usize,
}

impl FallbackPolicy {
    pub fn naive() -> Self {
        Self {
            kind: FallbackKind::Naive,
            min_rows: 1,
        }
    }

    pub fn column_mean() -> Self {
        Self {
            kind: FallbackKind::ColumnMean,
            min_rows: 1,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: FallbackKind::Linear,
            min_rows: 3,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let needed = match self.kind {
            FallbackKind::Naive | FallbackKind::ColumnMean => 1,
            FallbackKind::Linear => 3,
            FallbackKind::Drift => return Err(PolicyError::KindNotAllowed("drift")),
        };
        if self.min_rows < needed {
            return Err(PolicyError::MinRowsTooSmall {
                kind: self.kind.name(),
                needed,
                got: self.min_rows,
            });
        }
        Ok(())
    }

    /// The rule actually applied to a column with `n_known` rows.
    pub fn effective_kind(&self, n_known: usize) -> FallbackKind {
        if n_known >= self.min_rows {
            self.kind
        } else {
            FallbackKind::Naive
        }
    }
}

/// Predictions for a column's unknown rows from its known prefix alone.
/// Known rows are the prefix 0..known.len(); `unknown_rows` index the same
/// column. Total for any non-empty prefix.
pub(crate) fn rule_predictions(
    kind: FallbackKind,
    known: &[f64],
    unknown_rows: &[usize],
) -> Vec<f64> {
    let n = known.len();
    assert!(n > 0, "rule_predictions needs at least one known value");
    match kind {
        FallbackKind::Naive => vec![known[n - 1]; unknown_rows.len()],
        FallbackKind::ColumnMean => {
            let mean = known.iter().sum::<f64>() / n as f64;
            vec![mean; unknown_rows.len()]
        }
        FallbackKind::Drift => {
            if n < 2 {
                return vec![known[0]; unknown_rows.len()];
            }
            let slope = (known[n - 1] - known[0]) / (n - 1) as f64;
            unknown_rows
                .iter()
                .map(|&t| known[n - 1] + (t + 1 - n) as f64 * slope)
                .collect()
        }
        FallbackKind::Linear => {
            if n < 3 {
                return rule_predictions(FallbackKind::Naive, known, unknown_rows);
            }
            let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
            let y = DVector::from_column_slice(known);
            let ls = least_squares(&x, &y);
            unknown_rows
                .iter()
                .map(|&t| ls.coefficients[0] + ls.coefficients[1] * t as f64)
                .collect()
        }
    }
}

/// Fills unknown cells with the bottom-most known value of their column.
/// A column with no known cells carries each row's last observed value
/// instead, and zero if the row has none. Total: never fails.
pub fn naive_fill(m: &CohortMatrix) -> FilledMatrix {
    fill_with_rule(m, FallbackKind::Naive)
}

/// Per-column drift: the last known value plus the average first-to-last
/// step, extended by the number of rows past the known prefix. Columns with
/// fewer than two known values carry the last value (naive).
pub fn drift_fill(m: &CohortMatrix) -> FilledMatrix {
    fill_with_rule(m, FallbackKind::Drift)
}

fn fill_with_rule(m: &CohortMatrix, kind: FallbackKind) -> FilledMatrix {
    let mut filled = FilledMatrix::begin(m);
    for u in 0..m.horizon_count() {
        let col = m.column_series(u).expect("column index in range");
        if col.unknown_rows.is_empty() {
            filled.push_column_diagnostics(complete_column(u, col.known.len()));
            continue;
        }
        let mut notes = Vec::new();
        let effective = match kind {
            FallbackKind::Drift if col.known.len() < 2 => FallbackKind::Naive,
            k => k,
        };
        let predictions = if col.known.is_empty() {
            notes.push("column empty; carried each row's last observed value".into());
            col.unknown_rows
                .iter()
                .map(|&t| row_carry(m, t))
                .collect()
        } else {
            rule_predictions(effective, &col.known, &col.unknown_rows)
        };
        write_column(&mut filled, u, &col.known, &col.unknown_rows, predictions, effective, notes);
    }
    filled
}

/// Per-column regression of value on cohort index plus the named covariates.
/// Columns with fewer than three known rows fall back to naive. Collinear
/// covariate columns are dropped (rightmost first) until the design has full
/// rank, with a note in the column diagnostics.
pub fn linear_fill(
    m: &CohortMatrix,
    cov: &CohortCovariates,
    feature_names: &[String],
) -> Result<FilledMatrix, MatrixError> {
    let all_idx = cov.resolve(feature_names)?;
    // Fail on missing covariate rows before touching any column.
    for t in 0..m.n_cohorts() {
        cov.values_for(m.cohort(t), &all_idx)?;
    }

    let mut filled = FilledMatrix::begin(m);
    for u in 0..m.horizon_count() {
        let col = m.column_series(u).expect("column index in range");
        if col.unknown_rows.is_empty() {
            filled.push_column_diagnostics(complete_column(u, col.known.len()));
            continue;
        }
        let n = col.known.len();
        let mut notes = Vec::new();
        let (predictions, effective) = if n == 0 {
            notes.push("column empty; carried each row's last observed value".into());
            let p = col.unknown_rows.iter().map(|&t| row_carry(m, t)).collect();
            (p, FallbackKind::Naive)
        } else if n < 3 {
            notes.push(format!("{n} known rows < 3; used naive for this column"));
            (
                rule_predictions(FallbackKind::Naive, &col.known, &col.unknown_rows),
                FallbackKind::Naive,
            )
        } else {
            let mut active: Vec<usize> = all_idx.clone();
            let y = DVector::from_column_slice(&col.known);
            let known_rows: Vec<usize> = (0..n).collect();
            let build = |rows: &[usize], active: &[usize]| -> Result<DMatrix<f64>, MatrixError> {
                let mut x = DMatrix::zeros(rows.len(), 2 + active.len());
                for (i, &t) in rows.iter().enumerate() {
                    x[(i, 0)] = 1.0;
                    x[(i, 1)] = t as f64;
                    let vals = cov.values_for(m.cohort(t), active)?;
                    for (j, v) in vals.into_iter().enumerate() {
                        x[(i, 2 + j)] = v;
                    }
                }
                Ok(x)
            };
            loop {
                let x_fit = build(&known_rows, &active)?;
                let ls = least_squares(&x_fit, &y);
                if ls.rank < x_fit.ncols() && !active.is_empty() {
                    let dropped = active.pop().unwrap();
                    notes.push(format!(
                        "design rank {} < {} columns; dropped covariate '{}'",
                        ls.rank,
                        x_fit.ncols(),
                        cov.names()[dropped]
                    ));
                    continue;
                }
                let x_pred = build(&col.unknown_rows, &active)?;
                let p = (x_pred * &ls.coefficients).iter().copied().collect();
                break (p, FallbackKind::Linear);
            }
        };
        write_column(&mut filled, u, &col.known, &col.unknown_rows, predictions, effective, notes);
    }
    Ok(filled)
}

/// One model's externally produced predictions, keyed by (cohort, u).
pub type ImportedPredictions = BTreeMap<(CohortMonth, usize), f64>;

/// Reads externally produced predictions, one file possibly holding several
/// models: `cohort_month,u,value,model_name`. Returns per-model lookup
/// tables keyed by (cohort, u); a repeated cell within one model is an
/// error.
pub fn read_imported_predictions(
    path: &Path,
) -> Result<BTreeMap<String, ImportedPredictions>, MatrixError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = ["cohort_month", "u", "value", "model_name"];
    if headers.iter().ne(expected) {
        return Err(MatrixError::BadHeader {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out: BTreeMap<String, ImportedPredictions> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let cohort: CohortMonth = row[0].parse()?;
        let u: usize = row[1].parse().map_err(|_| MatrixError::MalformedRow {
            row: i,
            reason: format!("bad u '{}'", &row[1]),
        })?;
        let value: f64 = row[2].parse().map_err(|_| MatrixError::MalformedRow {
            row: i,
            reason: format!("bad value '{}'", &row[2]),
        })?;
        if !value.is_finite() {
            return Err(MatrixError::MalformedRow {
                row: i,
                reason: format!("non-finite value '{}'", &row[2]),
            });
        }
        let model = row[3].to_string();
        if model.is_empty() {
            return Err(MatrixError::MalformedRow {
                row: i,
                reason: "empty model_name".into(),
            });
        }
        if out
            .entry(model)
            .or_default()
            .insert((cohort, u), value)
            .is_some()
        {
            return Err(MatrixError::DuplicateCell { cohort, u });
        }
    }
    Ok(out)
}

fn complete_column(u: usize, n_known: usize) -> ColumnDiagnostics {
    ColumnDiagnostics {
        u,
        n_known,
        n_predicted: 0,
        method: ColumnMethod::Complete,
        floored: 0,
        notes: Vec::new(),
    }
}

fn row_carry(m: &CohortMatrix, t: usize) -> f64 {
    (0..m.horizon_count())
        .rev()
        .find_map(|u| m.value(t, u))
        .unwrap_or(0.0)
}

fn write_column(
    filled: &mut FilledMatrix,
    u: usize,
    known: &[f64],
    unknown_rows: &[usize],
    mut predictions: Vec<f64>,
    kind: FallbackKind,
    mut notes: Vec<String>,
) {
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
    for (&t, &v) in unknown_rows.iter().zip(&predictions) {
        filled.set_predicted(t, u, v).expect("unknown cells are writable");
    }
    filled.push_column_diagnostics(ColumnDiagnostics {
        u,
        n_known: known.len(),
        n_predicted: unknown_rows.len(),
        method: ColumnMethod::Rule {
            kind,
            reason: "baseline".into(),
        },
        floored,
        notes,
    });
}
