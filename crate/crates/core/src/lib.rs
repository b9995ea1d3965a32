//! Forecasting engine for cohort-by-horizon revenue matrices.
//!
//! Cohort data is laid out as a matrix whose rows are monthly cohorts and
//! whose columns are months since the cohort's attribution month. At any
//! prediction month the known cells form a staircase above the diagonal;
//! everything below it is the forecasting target. The [`forecaster2d`]
//! module fills that region column by column, rolling each completed
//! column into the next column's exogenous regressors via the ARIMAX
//! models in [`arimax`]. [`baselines`], [`metrics`], and [`backtest`]
//! provide reference models, accuracy metrics, and a rolling-origin
//! evaluation harness; [`synth`] generates deterministic test data.

pub mod arimax;
pub mod backtest;
pub mod baselines;
pub mod forecaster2d;
pub mod matrix;
pub mod metrics;
pub mod month;
pub mod synth;

mod linalg;

pub use matrix::{CellStatus, CohortCovariates, CohortMatrix, MatrixError};
pub use month::CohortMonth;
