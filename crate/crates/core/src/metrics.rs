//! Point-forecast error measures and grouped summaries.
//!
//! sMAPE uses the 0..200 percent variant: each pair contributes
//! 200 * |a - p| / (|a| + |p|), and a 0/0 pair contributes zero. Grouped
//! summaries report the metric over the group together with the sample
//! standard deviation and median of the per-record contributions, so both
//! mean and median readings of a series are available.

use std::collections::BTreeMap;
use std::fmt;

use crate::month::CohortMonth;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {actuals} actuals vs {predictions} predictions")]
    LengthMismatch { actuals: usize, predictions: usize },
}

fn check(actuals: &[f64], predictions: &[f64]) -> Result<(), MetricsError> {
    if actuals.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            actuals: actuals.len(),
            predictions: predictions.len(),
        });
    }
    if actuals.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

pub fn rmse(actuals: &[f64], predictions: &[f64]) -> Result<f64, MetricsError> {
    check(actuals, predictions)?;
    let mse = actuals
        .iter()
        .zip(predictions)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        / actuals.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(actuals: &[f64], predictions: &[f64]) -> Result<f64, MetricsError> {
    check(actuals, predictions)?;
    Ok(actuals
        .iter()
        .zip(predictions)
        .map(|(a, p)| (a - p).abs())
        .sum::<f64>()
        / actuals.len() as f64)
}

/// One pair's sMAPE contribution, in 0..=200 percent.
pub fn smape_pair(actual: f64, predicted: f64) -> f64 {
    let denom = actual.abs() + predicted.abs();
    if denom == 0.0 {
        0.0
    } else {
        // Divide before scaling: the ratio is <= 1 exactly, so the result
        // cannot round past 200.
        200.0 * ((actual - predicted).abs() / denom)
    }
}

pub fn smape(actuals: &[f64], predictions: &[f64]) -> Result<f64, MetricsError> {
    check(actuals, predictions)?;
    Ok(actuals
        .iter()
        .zip(predictions)
        .map(|(&a, &p)| smape_pair(a, p))
        .sum::<f64>()
        / actuals.len() as f64)
}

/// One scored cell of a backtest.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub prediction_month: CohortMonth,
    pub cohort_month: CohortMonth,
    pub u: usize,
    pub horizon: u32,
    pub model: String,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Horizon,
    PredictionMonth,
    Cohort,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Mae,
    Smape,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    Horizon(u32),
    Month(CohortMonth),
    Cohort(CohortMonth),
    Model(String),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Horizon(h) => write!(f, "{h}"),
            GroupKey::Month(m) | GroupKey::Cohort(m) => write!(f, "{m}"),
            GroupKey::Model(name) => write!(f, "{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStat {
    pub key: GroupKey,
    pub metric: f64,
    pub count: usize,
    /// Sample standard deviation of the per-record contributions
    /// (absolute error for MAE, squared error for RMSE, pair sMAPE for
    /// sMAPE); zero for singleton groups.
    pub dispersion: f64,
    /// Median of the same per-record contributions.
    pub median_contribution: f64,
}

fn contribution(metric: Metric, a: f64, p: f64) -> f64 {
    match metric {
        Metric::Rmse => (a - p) * (a - p),
        Metric::Mae => (a - p).abs(),
        Metric::Smape => smape_pair(a, p),
    }
}

fn finish(metric: Metric, mean_contribution: f64) -> f64 {
    match metric {
        Metric::Rmse => mean_contribution.sqrt(),
        Metric::Mae | Metric::Smape => mean_contribution,
    }
}

pub(crate) fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Groups records by the requested key and summarizes one metric per group.
/// Rows come back in key order; no records means no rows.
pub fn aggregate(records: &[ErrorRecord], group_by: GroupBy, metric: Metric) -> Vec<GroupStat> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = match group_by {
            GroupBy::Horizon => GroupKey::Horizon(r.horizon),
            GroupBy::PredictionMonth => GroupKey::Month(r.prediction_month),
            GroupBy::Cohort => GroupKey::Cohort(r.cohort_month),
            GroupBy::Model => GroupKey::Model(r.model.clone()),
        };
        groups
            .entry(key)
            .or_default()
            .push(contribution(metric, r.actual, r.predicted));
    }
    groups
        .into_iter()
        .map(|(key, mut contributions)| {
            let count = contributions.len();
            let mean = contributions.iter().sum::<f64>() / count as f64;
            let dispersion = sample_std(&contributions);
            contributions.sort_by(|a, b| a.partial_cmp(b).unwrap());
            GroupStat {
                key,
                metric: finish(metric, mean),
                count,
                dispersion,
                median_contribution: median(&contributions),
            }
        })
        .collect()
}
