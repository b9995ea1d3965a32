//! Rolling-origin evaluation over a fully known truth matrix.
//!
//! For every month in the plan range the truth is masked down to what would
//! have been visible then, every model fills the hidden region from that
//! identical input, and each predicted cell with a known truth value becomes
//! one error record. Failures are contained: a model that errors on one
//! month is skipped for that month, truth gaps are counted, and the report
//! writer produces byte-identical files for identical inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::{drift_fill, linear_fill, naive_fill, ImportedPredictions};
use crate::forecaster2d::{fill_matrix, Forecast2DConfig};
use crate::matrix::{CohortCovariates, CohortMatrix, MatrixError};
use crate::metrics::{self, ErrorRecord};
use crate::month::CohortMonth;

pub const MODEL_2D: &str = "2d_arimax";
pub const MODEL_NAIVE: &str = "naive";
pub const MODEL_DRIFT: &str = "drift";
pub const MODEL_LINEAR: &str = "linear";

#[derive(Debug, thiserror::Error)]
pub enum BacktestError {
    #[error("backtest range {start}..={end} is empty")]
    EmptyRange { start: CohortMonth, end: CohortMonth },
    #[error("backtest start {start} precedes {min}, the first month with two observable cohorts")]
    StartTooEarly { start: CohortMonth, min: CohortMonth },
    #[error("backtest end {end} exceeds truth coverage {max}")]
    EndBeyondTruth { end: CohortMonth, max: CohortMonth },
    #[error("backtest needs at least two cohorts in the truth matrix")]
    TooFewCohorts,
    #[error("no models configured")]
    NoModels,
    #[error("duplicate model name '{0}'")]
    DuplicateModelName(String),
    #[error("model name '{0}' must be non-empty without commas or quotes")]
    InvalidModelName(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("no records in the newest-cohort slice")]
    EmptySlice,
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    TwoD(Box<Forecast2DConfig>),
    Naive,
    Drift,
    Linear { covariate_names: Vec<String> },
    /// Externally produced predictions keyed by (cohort, u); scored exactly
    /// like native models wherever a key matches a hidden cell.
    Imported {
        name: String,
        predictions: ImportedPredictions,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &str {
        match self {
            ModelSpec::TwoD(_) => MODEL_2D,
            ModelSpec::Naive => MODEL_NAIVE,
            ModelSpec::Drift => MODEL_DRIFT,
            ModelSpec::Linear { .. } => MODEL_LINEAR,
            ModelSpec::Imported { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BacktestPlan {
    pub start_month: CohortMonth,
    /// Inclusive.
    pub end_month: CohortMonth,
    pub models: Vec<ModelSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Info,
    Warn,
    Error,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Info => "info",
            Level::Warn => "warn",
            Level::Error => "error",
        })
    }
}

/// One structured diagnostic, rendered as `level=.. code=.. msg=".."`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub level: Level,
    pub code: &'static str,
    pub msg: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "level={} code={} msg={:?}", self.level, self.code, self.msg)
    }
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    /// Sorted by (prediction month, model, cohort, u).
    pub records: Vec<ErrorRecord>,
    /// Hidden cells whose truth never arrives; excluded from scoring.
    pub truth_gaps: usize,
    /// Model-month failures; scoring continued without them.
    pub model_failures: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// Per prediction month, the newest cohort's first-year sMAPE per model.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStat {
    pub prediction_month: CohortMonth,
    pub model: String,
    pub smape: f64,
    pub count: usize,
}

pub fn validate_plan(truth: &CohortMatrix, plan: &BacktestPlan) -> Result<(), BacktestError> {
    if plan.models.is_empty() {
        return Err(BacktestError::NoModels);
    }
    let mut seen = BTreeSet::new();
    for m in &plan.models {
        let name = m.name();
        if name.is_empty() || name.contains(',') || name.contains('"') {
            return Err(BacktestError::InvalidModelName(name.to_string()));
        }
        if !seen.insert(name.to_string()) {
            return Err(BacktestError::DuplicateModelName(name.to_string()));
        }
    }
    if plan.start_month > plan.end_month {
        return Err(BacktestError::EmptyRange {
            start: plan.start_month,
            end: plan.end_month,
        });
    }
    if truth.n_cohorts() < 2 {
        return Err(BacktestError::TooFewCohorts);
    }
    let min_start = truth.cohort(1).next();
    if plan.start_month < min_start {
        return Err(BacktestError::StartTooEarly {
            start: plan.start_month,
            min: min_start,
        });
    }
    if plan.end_month > truth.prediction_month() {
        return Err(BacktestError::EndBeyondTruth {
            end: plan.end_month,
            max: truth.prediction_month(),
        });
    }
    Ok(())
}

pub fn run(
    truth: &CohortMatrix,
    cov: &CohortCovariates,
    plan: &BacktestPlan,
) -> Result<BacktestResult, BacktestError> {
    validate_plan(truth, plan)?;

    let mut records = Vec::new();
    let mut truth_gaps = 0usize;
    let mut model_failures = 0usize;
    let mut diagnostics = Vec::new();

    let mut month = plan.start_month;
    while month <= plan.end_month {
        let masked = truth.masked_as_of(month);

        // Hidden cells this month, and which of them are scoreable.
        let mut scoreable = Vec::new();
        for t in 0..masked.n_cohorts() {
            for u in 0..masked.horizon_count() {
                if masked.value(t, u).is_some() {
                    continue;
                }
                match truth.value(t, u) {
                    Some(actual) => scoreable.push((t, u, actual)),
                    None => truth_gaps += 1,
                }
            }
        }
        for model in &plan.models {
            let filled = match model {
                ModelSpec::TwoD(cfg) => fill_matrix(&masked, cov, cfg).map_err(|e| e.to_string()),
                ModelSpec::Naive => Ok(naive_fill(&masked)),
                ModelSpec::Drift => Ok(drift_fill(&masked)),
                ModelSpec::Linear { covariate_names } => {
                    linear_fill(&masked, cov, covariate_names).map_err(|e| e.to_string())
                }
                ModelSpec::Imported { name, predictions } => {
                    let mut missing = 0usize;
                    for &(t, u, actual) in &scoreable {
                        let cohort = masked.cohort(t);
                        match predictions.get(&(cohort, u)) {
                            Some(&p) => records.push(ErrorRecord {
                                prediction_month: month,
                                cohort_month: cohort,
                                u,
                                horizon: horizon_of(month, cohort, u),
                                model: name.clone(),
                                actual,
                                predicted: p,
                            }),
                            None => missing += 1,
                        }
                    }
                    if missing > 0 {
                        diagnostics.push(Diagnostic {
                            level: Level::Warn,
                            code: "imported_missing",
                            msg: format!(
                                "month={month} model={name}: {missing} hidden cells without imported predictions"
                            ),
                        });
                    }
                    continue;
                }
            };
            match filled {
                Ok(filled) => {
                    for &(t, u, actual) in &scoreable {
                        let cohort = masked.cohort(t);
                        let predicted = filled
                            .value(t, u)
                            .expect("fills produce complete matrices");
                        records.push(ErrorRecord {
                            prediction_month: month,
                            cohort_month: cohort,
                            u,
                            horizon: horizon_of(month, cohort, u),
                            model: model.name().to_string(),
                            actual,
                            predicted,
                        });
                    }
                }
                Err(reason) => {
                    model_failures += 1;
                    diagnostics.push(Diagnostic {
                        level: Level::Warn,
                        code: "model_failure",
                        msg: format!("month={month} model={}: {reason}", model.name()),
                    });
                }
            }
        }
        month = month.next();
    }

    if truth_gaps > 0 {
        diagnostics.push(Diagnostic {
            level: Level::Info,
            code: "truth_gap",
            msg: format!("{truth_gaps} hidden cells had no truth value and were not scored"),
        });
    }
    records.sort_by(|a, b| {
        (a.prediction_month, &a.model, a.cohort_month, a.u).cmp(&(
            b.prediction_month,
            &b.model,
            b.cohort_month,
            b.u,
        ))
    });
    Ok(BacktestResult {
        records,
        truth_gaps,
        model_failures,
        diagnostics,
    })
}

fn horizon_of(prediction_month: CohortMonth, cohort: CohortMonth, u: usize) -> u32 {
    (prediction_month.months_until(cohort.add_months(u as i32)) + 1) as u32
}

/// Restricts records to each prediction month's newest cohort, first year of
/// life (u <= 12), and reports per-model sMAPE there. This is the view that
/// tracks how well the youngest, least observed cohort is forecast.
pub fn newest_cohort_slice(records: &[ErrorRecord]) -> Result<Vec<SliceStat>, BacktestError> {
    let mut newest: BTreeMap<CohortMonth, CohortMonth> = BTreeMap::new();
    for r in records {
        newest
            .entry(r.prediction_month)
            .and_modify(|c| *c = (*c).max(r.cohort_month))
            .or_insert(r.cohort_month);
    }
    let mut groups: BTreeMap<(CohortMonth, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        if r.cohort_month == newest[&r.prediction_month] && r.u <= 12 {
            groups
                .entry((r.prediction_month, r.model.clone()))
                .or_default()
                .push((r.actual, r.predicted));
        }
    }
    if groups.is_empty() {
        return Err(BacktestError::EmptySlice);
    }
    Ok(groups
        .into_iter()
        .map(|((prediction_month, model), pairs)| {
            let actuals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let predictions: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            SliceStat {
                prediction_month,
                model,
                smape: metrics::smape(&actuals, &predictions).expect("non-empty group"),
                count: pairs.len(),
            }
        })
        .collect())
}

/// Everything the run manifest records; serialized as JSON with no
/// timestamps so repeated runs stay byte-identical.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Factor applied to the working matrix when input scaling was on.
    pub scale_factor: Option<f64>,
    pub start_month: Option<CohortMonth>,
    pub end_month: Option<CohortMonth>,
    pub models: Vec<String>,
    pub n_records: usize,
    pub truth_gaps: usize,
    pub model_failures: usize,
    pub no_data: bool,
    /// Echo of the caller's configuration.
    pub config_echo: serde_json::Value,
}

impl RunManifest {
    pub fn for_backtest(plan: &BacktestPlan, result: &BacktestResult) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: "backtest".to_string(),
            seed: None,
            scale_factor: None,
            start_month: Some(plan.start_month),
            end_month: Some(plan.end_month),
            models: plan.models.iter().map(|m| m.name().to_string()).collect(),
            n_records: result.records.len(),
            truth_gaps: result.truth_gaps,
            model_failures: result.model_failures,
            no_data: result.records.is_empty(),
            config_echo: serde_json::Value::Null,
        }
    }
}

fn fmt_pct(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Signed relative error in percent; infinite when the truth is zero and the
/// prediction is not, zero when both are zero.
pub fn pct_error(actual: f64, predicted: f64) -> f64 {
    if actual == 0.0 {
        if predicted == 0.0 {
            0.0
        } else if predicted > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        100.0 * (predicted - actual) / actual.abs()
    }
}

pub fn records_csv(records: &[ErrorRecord]) -> String {
    let mut out =
        String::from("prediction_month,cohort_month,u,horizon,model,actual,predicted,error,pct_error\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.prediction_month,
            r.cohort_month,
            r.u,
            r.horizon,
            r.model,
            r.actual,
            r.predicted,
            r.predicted - r.actual,
            fmt_pct(pct_error(r.actual, r.predicted)),
        )
        .unwrap();
    }
    out
}

/// Per-model summary in the mean-plus-minus-std shape: each metric is
/// computed per prediction month, then averaged across months with its
/// sample standard deviation. Empty input keeps the header plus a no-data
/// marker row.
pub fn summary_csv(records: &[ErrorRecord]) -> String {
    let mut out = String::from(
        "model,n_records,n_months,mae_mean,mae_std,rmse_mean,rmse_std,smape_mean,smape_std\n",
    );
    if records.is_empty() {
        out.push_str("no_data,0,0,,,,,,\n");
        return out;
    }
    type MonthPairs = BTreeMap<CohortMonth, Vec<(f64, f64)>>;
    let mut by_model: BTreeMap<&str, MonthPairs> = BTreeMap::new();
    for r in records {
        by_model
            .entry(&r.model)
            .or_default()
            .entry(r.prediction_month)
            .or_default()
            .push((r.actual, r.predicted));
    }
    for (model, months) in by_model {
        let mut maes = Vec::new();
        let mut rmses = Vec::new();
        let mut smapes = Vec::new();
        let mut n_records = 0usize;
        for pairs in months.values() {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            n_records += pairs.len();
            maes.push(metrics::mae(&a, &p).expect("non-empty month group"));
            rmses.push(metrics::rmse(&a, &p).expect("non-empty month group"));
            smapes.push(metrics::smape(&a, &p).expect("non-empty month group"));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        writeln!(
            out,
            "{model},{n_records},{},{},{},{},{},{},{}",
            maes.len(),
            mean(&maes),
            metrics::sample_std(&maes),
            mean(&rmses),
            metrics::sample_std(&rmses),
            mean(&smapes),
            metrics::sample_std(&smapes),
        )
        .unwrap();
    }
    out
}

fn grouped_csv<K: Ord + Clone, F: Fn(&ErrorRecord) -> K, G: Fn(&K) -> String>(
    records: &[ErrorRecord],
    header: &str,
    key_of: F,
    key_fmt: G,
) -> String {
    let mut out = String::from(header);
    out.push('\n');
    if records.is_empty() {
        return out;
    }
    let mut groups: BTreeMap<(String, K), Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.model.clone(), key_of(r)))
            .or_default()
            .push((r.actual, r.predicted));
    }
    for ((model, key), pairs) in groups {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mut contributions: Vec<f64> = a
            .iter()
            .zip(&p)
            .map(|(&a, &p)| metrics::smape_pair(a, p))
            .collect();
        contributions.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = if contributions.len() % 2 == 1 {
            contributions[contributions.len() / 2]
        } else {
            0.5 * (contributions[contributions.len() / 2 - 1]
                + contributions[contributions.len() / 2])
        };
        writeln!(
            out,
            "{model},{},{},{},{},{},{}",
            key_fmt(&key),
            pairs.len(),
            metrics::smape(&a, &p).unwrap(),
            median,
            metrics::mae(&a, &p).unwrap(),
            metrics::rmse(&a, &p).unwrap(),
        )
        .unwrap();
    }
    out
}

/// sMAPE (mean and median), MAE, and RMSE per model and horizon.
pub fn by_horizon_csv(records: &[ErrorRecord]) -> String {
    grouped_csv(
        records,
        "model,horizon,count,smape_mean,smape_median,mae,rmse",
        |r| r.horizon,
        |h| h.to_string(),
    )
}

/// The same summaries per model and prediction month.
pub fn by_prediction_month_csv(records: &[ErrorRecord]) -> String {
    grouped_csv(
        records,
        "model,prediction_month,count,smape_mean,smape_median,mae,rmse",
        |r| r.prediction_month,
        |m| m.to_string(),
    )
}

const HIST_BIN_WIDTH: f64 = 5.0;
const HIST_LIMIT: f64 = 100.0;

/// Relative-error histogram: fixed 5-percent bins spanning -100..100 plus
/// underflow and overflow bins. Every model lists all 42 bins, and each
/// model's counts sum to its record count.
pub fn histogram_csv(records: &[ErrorRecord]) -> String {
    let mut out = String::from("model,bin_low_pct,bin_high_pct,count\n");
    let mut models: Vec<&str> = records.iter().map(|r| r.model.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    let n_regular = (2.0 * HIST_LIMIT / HIST_BIN_WIDTH) as usize; // 40
    for model in models {
        // bin 0 = underflow, 1..=40 regular, 41 = overflow
        let mut counts = vec![0usize; n_regular + 2];
        for r in records.iter().filter(|r| r.model == model) {
            let pct = pct_error(r.actual, r.predicted);
            let idx = if pct < -HIST_LIMIT {
                0
            } else if pct >= HIST_LIMIT {
                n_regular + 1
            } else {
                1 + ((pct + HIST_LIMIT) / HIST_BIN_WIDTH) as usize
            };
            counts[idx.min(n_regular + 1)] += 1;
        }
        for (idx, count) in counts.iter().enumerate() {
            let (low, high) = if idx == 0 {
                ("-inf".to_string(), format!("{}", -HIST_LIMIT))
            } else if idx == n_regular + 1 {
                (format!("{HIST_LIMIT}"), "inf".to_string())
            } else {
                let low = -HIST_LIMIT + (idx - 1) as f64 * HIST_BIN_WIDTH;
                (format!("{low}"), format!("{}", low + HIST_BIN_WIDTH))
            };
            writeln!(out, "{model},{low},{high},{count}").unwrap();
        }
    }
    out
}

/// Writes the full report: records, per-model summary, per-horizon and
/// per-month breakdowns, the relative-error histogram, and the manifest.
pub fn emit_report(
    result: &BacktestResult,
    manifest: &RunManifest,
    dir: &Path,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("records.csv"), records_csv(&result.records))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(&result.records))?;
    std::fs::write(dir.join("by_horizon.csv"), by_horizon_csv(&result.records))?;
    std::fs::write(
        dir.join("by_prediction_month.csv"),
        by_prediction_month_csv(&result.records),
    )?;
    std::fs::write(dir.join("histogram.csv"), histogram_csv(&result.records))?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}
