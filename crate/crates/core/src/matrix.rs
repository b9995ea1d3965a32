//! Cohort-by-horizon revenue matrix with a staircase known/unknown mask.
//!
//! Rows are monthly cohorts, columns are months since the cohort event
//! (u = 0..U-1). A cell (t, u) is known exactly when its event month,
//! `cohorts[t] + u`, has fully elapsed before the prediction month. The known
//! region is therefore a staircase: each row's known cells are a prefix of the
//! columns, each column's known cells are a prefix of the rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::month::{CohortMonth, MonthParseError};

/// Whether a cell's event month has elapsed before the prediction month.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Known,
    Unknown,
}

/// One long-format observation: revenue for a cohort at a months-since-event
/// offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub cohort_month: CohortMonth,
    pub months_since_event: usize,
    pub value: f64,
}

/// Known values of one column plus the row indices still to forecast.
///
/// The staircase mask guarantees `known` corresponds to a contiguous prefix of
/// the cohort rows and `unknown_rows` to the contiguous suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSeries {
    pub known: Vec<f64>,
    pub unknown_rows: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Month(#[from] MonthParseError),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("duplicate cell ({cohort}, u={u})")]
    DuplicateCell { cohort: CohortMonth, u: usize },
    #[error("staircase gap: cell ({cohort}, u={u}) should be known but no value was supplied")]
    StaircaseGap { cohort: CohortMonth, u: usize },
    #[error("negative value {value} at ({cohort}, u={u})")]
    NegativeValue {
        cohort: CohortMonth,
        u: usize,
        value: f64,
    },
    #[error("cell index (t={t}, u={u}) out of range for {n_cohorts}x{horizon_count} matrix")]
    IndexOutOfRange {
        t: usize,
        u: usize,
        n_cohorts: usize,
        horizon_count: usize,
    },
    #[error("missing diagonal cell ({cohort}, u={u}) while advancing to {new_month}")]
    MissingDiagonalCell {
        cohort: CohortMonth,
        u: usize,
        new_month: CohortMonth,
    },
    #[error("conflicting value at ({cohort}, u={u}): matrix holds {existing}, update supplied {supplied}")]
    ConflictingValue {
        cohort: CohortMonth,
        u: usize,
        existing: f64,
        supplied: f64,
    },
    #[error("no records and no prediction month supplied")]
    NoRecords,
    #[error("bad header: expected {expected}, found {found}")]
    BadHeader { expected: String, found: String },
    #[error("unknown covariate '{name}'; available: {available:?}")]
    UnknownCovariate {
        name: String,
        available: Vec<String>,
    },
    #[error("no covariate row for cohort {cohort}")]
    MissingCovariateRow { cohort: CohortMonth },
}

/// Cohort-by-horizon matrix. Immutable after construction: updates return new
/// values, so shared references are always safe to read concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortMatrix {
    cohorts: Vec<CohortMonth>,
    horizon_count: usize,
    prediction_month: CohortMonth,
    /// Row-major `n_cohorts x horizon_count`; `Some` exactly on known cells.
    values: Vec<Option<f64>>,
}

impl CohortMatrix {
    /// A matrix with no cohorts yet. Useful as the starting point for
    /// month-by-month accumulation via [`CohortMatrix::advance_prediction_month`].
    pub fn empty(horizon_count: usize, prediction_month: CohortMonth) -> Self {
        Self {
            cohorts: Vec::new(),
            horizon_count,
            prediction_month,
            values: Vec::new(),
        }
    }

    /// Builds a matrix from long-format records.
    ///
    /// The cohort axis spans the full contiguous range between the earliest
    /// and latest cohort months mentioned. `horizon_count` defaults to
    /// `max(months_since_event) + 1`, `prediction_month` to one month past the
    /// latest observed event month. Every cell the staircase mask marks known
    /// must be present exactly once; records outside the mask are rejected.
    pub fn from_records(
        records: &[CellRecord],
        horizon_count: Option<usize>,
        prediction_month: Option<CohortMonth>,
    ) -> Result<Self, MatrixError> {
        if records.is_empty() {
            return match prediction_month {
                Some(pm) => Ok(Self::empty(horizon_count.unwrap_or(0), pm)),
                None => Err(MatrixError::NoRecords),
            };
        }

        for (i, r) in records.iter().enumerate() {
            if !r.value.is_finite() {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!("non-finite value {}", r.value),
                });
            }
            if r.value < 0.0 {
                return Err(MatrixError::NegativeValue {
                    cohort: r.cohort_month,
                    u: r.months_since_event,
                    value: r.value,
                });
            }
        }

        let first = records.iter().map(|r| r.cohort_month).min().unwrap();
        let last = records.iter().map(|r| r.cohort_month).max().unwrap();
        let n_cohorts = first.months_until(last) as usize + 1;

        let horizon_count = horizon_count.unwrap_or_else(|| {
            records
                .iter()
                .map(|r| r.months_since_event)
                .max()
                .unwrap()
                + 1
        });
        let prediction_month = prediction_month.unwrap_or_else(|| {
            records
                .iter()
                .map(|r| r.cohort_month.add_months(r.months_since_event as i32))
                .max()
                .unwrap()
                .next()
        });

        let mut m = Self {
            cohorts: (0..n_cohorts).map(|i| first.add_months(i as i32)).collect(),
            horizon_count,
            prediction_month,
            values: vec![None; n_cohorts * horizon_count],
        };

        for (i, r) in records.iter().enumerate() {
            let u = r.months_since_event;
            if u >= horizon_count {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!(
                        "months_since_event {u} exceeds horizon_count {horizon_count}"
                    ),
                });
            }
            let t = first.months_until(r.cohort_month) as usize;
            if m.status_of(r.cohort_month, u) == CellStatus::Unknown {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!(
                        "cell ({}, u={u}) lies beyond prediction month {}",
                        r.cohort_month, m.prediction_month
                    ),
                });
            }
            let slot = &mut m.values[t * horizon_count + u];
            if slot.is_some() {
                return Err(MatrixError::DuplicateCell {
                    cohort: r.cohort_month,
                    u,
                });
            }
            *slot = Some(r.value);
        }

        m.check_staircase_complete()?;
        Ok(m)
    }

    fn check_staircase_complete(&self) -> Result<(), MatrixError> {
        for t in 0..self.cohorts.len() {
            for u in 0..self.horizon_count {
                let known = self.status_of(self.cohorts[t], u) == CellStatus::Known;
                if known && self.values[t * self.horizon_count + u].is_none() {
                    return Err(MatrixError::StaircaseGap {
                        cohort: self.cohorts[t],
                        u,
                    });
                }
            }
        }
        Ok(())
    }

    fn status_of(&self, cohort: CohortMonth, u: usize) -> CellStatus {
        if cohort.add_months(u as i32) < self.prediction_month {
            CellStatus::Known
        } else {
            CellStatus::Unknown
        }
    }

    pub fn n_cohorts(&self) -> usize {
        self.cohorts.len()
    }

    pub fn horizon_count(&self) -> usize {
        self.horizon_count
    }

    pub fn prediction_month(&self) -> CohortMonth {
        self.prediction_month
    }

    pub fn cohorts(&self) -> &[CohortMonth] {
        &self.cohorts
    }

    pub fn cohort(&self, t: usize) -> CohortMonth {
        self.cohorts[t]
    }

    pub fn cohort_index(&self, month: CohortMonth) -> Option<usize> {
        let d = self.cohorts.first()?.months_until(month);
        (0 <= d && (d as usize) < self.cohorts.len()).then_some(d as usize)
    }

    fn check_bounds(&self, t: usize, u: usize) -> Result<(), MatrixError> {
        if t >= self.cohorts.len() || u >= self.horizon_count {
            return Err(MatrixError::IndexOutOfRange {
                t,
                u,
                n_cohorts: self.cohorts.len(),
                horizon_count: self.horizon_count,
            });
        }
        Ok(())
    }

    pub fn cell_status(&self, t: usize, u: usize) -> Result<CellStatus, MatrixError> {
        self.check_bounds(t, u)?;
        Ok(self.status_of(self.cohorts[t], u))
    }

    /// The value at (t, u); `None` exactly when the cell is unknown.
    /// Panics on out-of-range indices.
    pub fn value(&self, t: usize, u: usize) -> Option<f64> {
        assert!(t < self.cohorts.len() && u < self.horizon_count);
        self.values[t * self.horizon_count + u]
    }

    pub fn known_cell_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn max_value(&self) -> Option<f64> {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    /// Multiplies every known value by `factor`. Used for per-dataset
    /// normalization; the caller records the factor so outputs can be
    /// restored to original units.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut().flatten() {
            *v *= factor;
        }
        out
    }

    /// Known values of column `u` in cohort order plus the rows left to
    /// forecast.
    pub fn column_series(&self, u: usize) -> Result<ColumnSeries, MatrixError> {
        if u >= self.horizon_count {
            return Err(MatrixError::IndexOutOfRange {
                t: 0,
                u,
                n_cohorts: self.cohorts.len(),
                horizon_count: self.horizon_count,
            });
        }
        let mut known = Vec::new();
        let mut unknown_rows = Vec::new();
        for t in 0..self.cohorts.len() {
            match self.values[t * self.horizon_count + u] {
                Some(v) => known.push(v),
                None => unknown_rows.push(t),
            }
        }
        Ok(ColumnSeries { known, unknown_rows })
    }

    /// Moves the clock forward one month: `new_rows` must supply exactly the
    /// cells that become known, i.e. the diagonal of event month equal to the
    /// current prediction month, including the u=0 cell of the newly started
    /// cohort. Supplying an already-known cell is accepted only when the value
    /// agrees bit-for-bit.
    pub fn advance_prediction_month(&self, new_rows: &[CellRecord]) -> Result<Self, MatrixError> {
        let new_month = self.prediction_month.next();
        let new_cohort = self.prediction_month;
        if let Some(last) = self.cohorts.last() {
            if last.next() != new_cohort {
                return Err(MatrixError::MalformedRow {
                    row: 0,
                    reason: format!(
                        "cohort axis ends at {last} but the new cohort is {new_cohort}; \
                         cohorts must stay gap-free"
                    ),
                });
            }
        }

        let mut out = self.clone();
        out.prediction_month = new_month;
        out.cohorts.push(new_cohort);
        let horizon_count = self.horizon_count;
        let old_len = out.values.len();
        out.values.resize(old_len + horizon_count, None);

        for (i, r) in new_rows.iter().enumerate() {
            if !r.value.is_finite() {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!("non-finite value {}", r.value),
                });
            }
            if r.value < 0.0 {
                return Err(MatrixError::NegativeValue {
                    cohort: r.cohort_month,
                    u: r.months_since_event,
                    value: r.value,
                });
            }
            let u = r.months_since_event;
            let t = match out.cohort_index(r.cohort_month) {
                Some(t) if u < horizon_count => t,
                _ => {
                    return Err(MatrixError::MalformedRow {
                        row: i,
                        reason: format!(
                            "cell ({}, u={u}) outside the matrix",
                            r.cohort_month
                        ),
                    })
                }
            };
            if out.status_of(r.cohort_month, u) == CellStatus::Unknown {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!(
                        "cell ({}, u={u}) is still unknown at {new_month}",
                        r.cohort_month
                    ),
                });
            }
            let slot = &mut out.values[t * horizon_count + u];
            match *slot {
                Some(existing) if existing.to_bits() != r.value.to_bits() => {
                    return Err(MatrixError::ConflictingValue {
                        cohort: r.cohort_month,
                        u,
                        existing,
                        supplied: r.value,
                    });
                }
                _ => *slot = Some(r.value),
            }
        }

        // Every newly-known cell must have arrived.
        for t in 0..out.cohorts.len() {
            for u in 0..horizon_count {
                if out.status_of(out.cohorts[t], u) == CellStatus::Known
                    && out.values[t * horizon_count + u].is_none()
                {
                    return Err(MatrixError::MissingDiagonalCell {
                        cohort: out.cohorts[t],
                        u,
                        new_month,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Re-masks the matrix as it would have looked at an earlier prediction
    /// month: cohorts not yet started are dropped and cells past the new
    /// staircase are cleared. Moving the month later is not possible here
    /// because the data for the wider staircase does not exist; use
    /// [`CohortMatrix::advance_prediction_month`] for that.
    pub fn masked_as_of(&self, prediction_month: CohortMonth) -> Self {
        let cohorts: Vec<CohortMonth> = self
            .cohorts
            .iter()
            .copied()
            .filter(|c| *c < prediction_month)
            .collect();
        let mut values = Vec::with_capacity(cohorts.len() * self.horizon_count);
        for (t, c) in cohorts.iter().enumerate() {
            for u in 0..self.horizon_count {
                let known = c.add_months(u as i32) < prediction_month;
                values.push(if known {
                    self.values[t * self.horizon_count + u]
                } else {
                    None
                });
            }
        }
        Self {
            cohorts,
            horizon_count: self.horizon_count,
            prediction_month,
            values,
        }
    }

    /// Known cells as long-format records, row-major order.
    pub fn records(&self) -> Vec<CellRecord> {
        let mut out = Vec::with_capacity(self.known_cell_count());
        for t in 0..self.cohorts.len() {
            for u in 0..self.horizon_count {
                if let Some(v) = self.values[t * self.horizon_count + u] {
                    out.push(CellRecord {
                        cohort_month: self.cohorts[t],
                        months_since_event: u,
                        value: v,
                    });
                }
            }
        }
        out
    }

    // --- CSV ingestion and serialization -------------------------------

    /// Parses the long format without building a matrix, so callers can
    /// filter records (e.g. mask a "pretend it is month M" cutoff) before
    /// the staircase validation in [`Self::from_records`] runs.
    pub fn read_long_records(path: &Path) -> Result<Vec<CellRecord>, MatrixError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let expected = ["cohort_month", "months_since_event", "value"];
        if headers.iter().take(3).ne(expected) || headers.len() != 3 {
            return Err(MatrixError::BadHeader {
                expected: expected.join(","),
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let cohort_month: CohortMonth = row[0].parse()?;
            let months_since_event: usize =
                row[1].parse().map_err(|_| MatrixError::MalformedRow {
                    row: i,
                    reason: format!("bad months_since_event '{}'", &row[1]),
                })?;
            let value: f64 = row[2].parse().map_err(|_| MatrixError::MalformedRow {
                row: i,
                reason: format!("bad value '{}'", &row[2]),
            })?;
            records.push(CellRecord {
                cohort_month,
                months_since_event,
                value,
            });
        }
        Ok(records)
    }

    pub fn read_long_csv(
        path: &Path,
        horizon_count: Option<usize>,
        prediction_month: Option<CohortMonth>,
    ) -> Result<Self, MatrixError> {
        let records = Self::read_long_records(path)?;
        Self::from_records(&records, horizon_count, prediction_month)
    }

    pub fn write_long_csv(&self, path: &Path) -> Result<(), MatrixError> {
        let mut out = String::from("cohort_month,months_since_event,value\n");
        for r in self.records() {
            // f64 Display is shortest round-trip, so reading the file back
            // reproduces values bit-for-bit.
            writeln!(out, "{},{},{}", r.cohort_month, r.months_since_event, r.value).unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Wide layout: one row per cohort, columns `u0..u{U-1}`, unknown cells
    /// left empty.
    pub fn read_wide_csv(
        path: &Path,
        prediction_month: Option<CohortMonth>,
    ) -> Result<Self, MatrixError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || &headers[0] != "cohort_month" {
            return Err(MatrixError::BadHeader {
                expected: "cohort_month,u0,...".into(),
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let horizon_count = headers.len() - 1;
        for (u, h) in headers.iter().skip(1).enumerate() {
            if h != format!("u{u}") {
                return Err(MatrixError::BadHeader {
                    expected: format!("u{u}"),
                    found: h.to_string(),
                });
            }
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != headers.len() {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!("expected {} fields, found {}", headers.len(), row.len()),
                });
            }
            let cohort_month: CohortMonth = row[0].parse()?;
            for u in 0..horizon_count {
                let field = row[u + 1].trim();
                if field.is_empty() {
                    continue;
                }
                let value: f64 = field.parse().map_err(|_| MatrixError::MalformedRow {
                    row: i,
                    reason: format!("bad value '{field}' in column u{u}"),
                })?;
                records.push(CellRecord {
                    cohort_month,
                    months_since_event: u,
                    value,
                });
            }
        }
        Self::from_records(&records, Some(horizon_count), prediction_month)
    }

    pub fn write_wide_csv(&self, path: &Path) -> Result<(), MatrixError> {
        std::fs::write(path, self.wide_csv_string())?;
        Ok(())
    }

    pub fn wide_csv_string(&self) -> String {
        let mut out = String::from("cohort_month");
        for u in 0..self.horizon_count {
            write!(out, ",u{u}").unwrap();
        }
        out.push('\n');
        for t in 0..self.cohorts.len() {
            write!(out, "{}", self.cohorts[t]).unwrap();
            for u in 0..self.horizon_count {
                match self.values[t * self.horizon_count + u] {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Named per-cohort features entering the forecast as exogenous regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortCovariates {
    names: Vec<String>,
    rows: BTreeMap<CohortMonth, Vec<f64>>,
}

impl CohortCovariates {
    pub fn new(
        names: Vec<String>,
        rows: Vec<(CohortMonth, Vec<f64>)>,
    ) -> Result<Self, MatrixError> {
        let mut map = BTreeMap::new();
        for (i, (month, values)) in rows.into_iter().enumerate() {
            if values.len() != names.len() {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!(
                        "cohort {month} has {} covariate values, expected {}",
                        values.len(),
                        names.len()
                    ),
                });
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(MatrixError::MalformedRow {
                    row: i,
                    reason: format!("non-finite covariate value {bad} for cohort {month}"),
                });
            }
            if map.insert(month, values).is_some() {
                return Err(MatrixError::DuplicateCell {
                    cohort: month,
                    u: 0,
                });
            }
        }
        Ok(Self { names, rows: map })
    }

    pub fn empty() -> Self {
        Self {
            names: Vec::new(),
            rows: BTreeMap::new(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, month: CohortMonth) -> Option<&[f64]> {
        self.rows.get(&month).map(|v| v.as_slice())
    }

    /// Resolves feature names to column indices, erroring on unknown names.
    pub fn resolve(&self, wanted: &[String]) -> Result<Vec<usize>, MatrixError> {
        wanted
            .iter()
            .map(|name| {
                self.names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| MatrixError::UnknownCovariate {
                        name: name.clone(),
                        available: self.names.clone(),
                    })
            })
            .collect()
    }

    /// The selected features for one cohort, in `wanted_idx` order. Missing
    /// cohorts are a hard error: imputing would silently corrupt the
    /// exogenous term of the model.
    pub fn values_for(
        &self,
        month: CohortMonth,
        wanted_idx: &[usize],
    ) -> Result<Vec<f64>, MatrixError> {
        if wanted_idx.is_empty() {
            return Ok(Vec::new());
        }
        let row = self
            .row(month)
            .ok_or(MatrixError::MissingCovariateRow { cohort: month })?;
        Ok(wanted_idx.iter().map(|&k| row[k]).collect())
    }

    pub fn read_csv(path: &Path) -> Result<Self, MatrixError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || &headers[0] != "cohort_month" {
            return Err(MatrixError::BadHeader {
                expected: "cohort_month,<feature>,...".into(),
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let month: CohortMonth = row[0].parse()?;
            let mut values = Vec::with_capacity(names.len());
            for field in row.iter().skip(1) {
                values.push(field.parse::<f64>().map_err(|_| MatrixError::MalformedRow {
                    row: i,
                    reason: format!("bad covariate value '{field}'"),
                })?);
            }
            rows.push((month, values));
        }
        Self::new(names, rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MatrixError> {
        let mut out = String::from("cohort_month");
        for n in &self.names {
            write!(out, ",{n}").unwrap();
        }
        out.push('\n');
        for (month, values) in &self.rows {
            write!(out, "{month}").unwrap();
            for v in values {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
