//! TOML run configuration shared by every subcommand.
//!
//! One file describes a whole run; the subcommand picks the sections it
//! needs. Paths inside the file resolve against the file's own directory, so
//! a config can travel with its data.

use std::path::{Path, PathBuf};

use cohortcast_core::arimax::{default_order_grid, EstimationConfig, ModelOrder};
use cohortcast_core::baselines::{FallbackKind, FallbackPolicy};
use cohortcast_core::forecaster2d::Forecast2DConfig;
use cohortcast_core::synth::SynthConfig;
use cohortcast_core::CohortMonth;

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: Option<InputSection>,
    pub model: Option<ModelSection>,
    pub backtest: Option<BacktestSection>,
    pub synth: Option<SynthConfig>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// Long-format values CSV: `cohort_month,months_since_event,value`.
    pub values: PathBuf,
    /// Covariates CSV: `cohort_month` plus one column per covariate.
    pub covariates: Option<PathBuf>,
    /// Overrides the inferred prediction month (latest event month + 1).
    pub prediction_month: Option<CohortMonth>,
    /// Overrides the inferred column count.
    pub horizon_count: Option<usize>,
    /// Divide by the matrix maximum before fitting; predictions are scaled
    /// back, observed cells pass through untouched.
    #[serde(default)]
    pub scale_by_max: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ModelKind {
    #[serde(rename = "2d_arimax")]
    TwoDArimax,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "drift")]
    Drift,
    #[serde(rename = "linear")]
    Linear,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub covariate_names: Vec<String>,
    pub include_prev_column: bool,
    pub fallback: FallbackSection,
    /// Candidate (p, d, q) orders; omitted means the default grid.
    pub orders: Option<Vec<[usize; 3]>>,
    pub enforce_stationarity: bool,
    pub min_obs_per_param: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let est = EstimationConfig::default();
        Self {
            kind: ModelKind::TwoDArimax,
            covariate_names: Vec::new(),
            include_prev_column: true,
            fallback: FallbackSection::default(),
            orders: None,
            enforce_stationarity: est.enforce_stationarity,
            min_obs_per_param: est.min_obs_per_param,
            max_iterations: est.max_iterations,
            gradient_tolerance: est.gradient_tolerance,
        }
    }
}

impl ModelSection {
    pub fn estimation(&self) -> Result<EstimationConfig, String> {
        let order_grid = match &self.orders {
            None => default_order_grid(),
            Some(list) if list.is_empty() => {
                return Err("model.orders must list at least one (p, d, q) triple".into())
            }
            Some(list) => list.iter().map(|&[p, d, q]| ModelOrder::new(p, d, q)).collect(),
        };
        if !(self.min_obs_per_param > 0.0 && self.min_obs_per_param.is_finite()) {
            return Err("model.min_obs_per_param must be a positive number".into());
        }
        if self.max_iterations == 0 {
            return Err("model.max_iterations must be at least 1".into());
        }
        if !(self.gradient_tolerance > 0.0 && self.gradient_tolerance.is_finite()) {
            return Err("model.gradient_tolerance must be a positive number".into());
        }
        Ok(EstimationConfig {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            order_grid,
            enforce_stationarity: self.enforce_stationarity,
            min_obs_per_param: self.min_obs_per_param,
        })
    }

    pub fn forecast_config(&self, horizon_count: usize) -> Result<Forecast2DConfig, String> {
        Ok(Forecast2DConfig {
            horizon_count,
            estimation: self.estimation()?,
            covariate_names: self.covariate_names.clone(),
            fallback: self.fallback.to_policy()?,
            include_prev_column: self.include_prev_column,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FallbackSection {
    pub kind: Option<FallbackKind>,
    pub min_rows: Option<usize>,
}

impl FallbackSection {
    pub fn to_policy(self) -> Result<FallbackPolicy, String> {
        let kind = self.kind.unwrap_or(FallbackKind::Naive);
        let default_min = match kind {
            FallbackKind::Naive | FallbackKind::ColumnMean | FallbackKind::Drift => 1,
            FallbackKind::Linear => 3,
        };
        let policy = FallbackPolicy {
            kind,
            min_rows: self.min_rows.unwrap_or(default_min),
        };
        policy.validate().map_err(|e| format!("model.fallback: {e}"))?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    /// First prediction month to replay.
    pub start: CohortMonth,
    /// Last prediction month, inclusive.
    pub end: CohortMonth,
    #[serde(default = "default_backtest_models")]
    pub models: Vec<String>,
    /// Externally produced predictions to score alongside the native models.
    #[serde(default)]
    pub imported: Vec<ImportedSection>,
}

fn default_backtest_models() -> Vec<String> {
    ["2d_arimax", "naive", "drift", "linear"]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportedSection {
    pub name: String,
    /// CSV with header `cohort_month,u,value,model_name`.
    pub path: PathBuf,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

/// Relative paths in a config refer to the config file's directory, not the
/// process working directory.
pub fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        match config_path.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_forecast_config_parses() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [input]
            values = "values.csv"

            [output]
            dir = "out"
            "#,
        )
        .unwrap();
        let input = cfg.input.unwrap();
        assert_eq!(input.values, PathBuf::from("values.csv"));
        assert!(!input.scale_by_max);
        assert!(cfg.model.is_none());
        assert_eq!(cfg.output.unwrap().dir, PathBuf::from("out"));
    }

    #[test]
    fn model_section_round_trips_into_forecast_config() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [model]
            kind = "2d_arimax"
            covariate_names = ["spend"]
            include_prev_column = false
            orders = [[1, 0, 0], [0, 1, 1]]
            min_obs_per_param = 2.5

            [model.fallback]
            kind = "linear"
            min_rows = 4
            "#,
        )
        .unwrap();
        let model = cfg.model.unwrap();
        let fc = model.forecast_config(12).unwrap();
        assert_eq!(fc.horizon_count, 12);
        assert_eq!(fc.covariate_names, vec!["spend".to_string()]);
        assert!(!fc.include_prev_column);
        assert_eq!(fc.fallback.kind, FallbackKind::Linear);
        assert_eq!(fc.fallback.min_rows, 4);
        assert_eq!(fc.estimation.order_grid.len(), 2);
        assert_eq!(fc.estimation.order_grid[0], ModelOrder::new(1, 0, 0));
        assert_eq!(fc.estimation.min_obs_per_param, 2.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[input]\nvalues = \"v.csv\"\ntypo_key = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("typo_key"), "{err}");
    }

    #[test]
    fn drift_fallback_is_rejected() {
        let cfg: RunConfig = toml::from_str("[model.fallback]\nkind = \"drift\"\n").unwrap();
        let err = cfg.model.unwrap().fallback.to_policy().unwrap_err();
        assert!(err.contains("drift"), "{err}");
    }

    #[test]
    fn empty_order_list_is_rejected() {
        let cfg: RunConfig = toml::from_str("[model]\norders = []\n").unwrap();
        let err = cfg.model.unwrap().estimation().unwrap_err();
        assert!(err.contains("orders"), "{err}");
    }

    #[test]
    fn bad_month_string_is_a_parse_error() {
        let err = toml::from_str::<RunConfig>("[backtest]\nstart = \"2024-13\"\nend = \"2024-02\"\n");
        assert!(err.is_err());
    }

    #[test]
    fn backtest_defaults_cover_all_native_models() {
        let cfg: RunConfig =
            toml::from_str("[backtest]\nstart = \"2024-01\"\nend = \"2024-03\"\n").unwrap();
        let bt = cfg.backtest.unwrap();
        assert_eq!(bt.models, vec!["2d_arimax", "naive", "drift", "linear"]);
        assert!(bt.imported.is_empty());
    }

    #[test]
    fn paths_resolve_against_the_config_directory() {
        let cfg_path = Path::new("/tmp/run/config.toml");
        assert_eq!(
            resolve(cfg_path, Path::new("data/values.csv")),
            PathBuf::from("/tmp/run/data/values.csv")
        );
        assert_eq!(
            resolve(cfg_path, Path::new("/abs/values.csv")),
            PathBuf::from("/abs/values.csv")
        );
        assert_eq!(
            resolve(Path::new("config.toml"), Path::new("values.csv")),
            PathBuf::from("values.csv")
        );
    }

    #[test]
    fn synth_section_accepts_partial_overrides() {
        let cfg: RunConfig = toml::from_str("[synth]\nn_cohorts = 6\nseed = 9\n").unwrap();
        let synth = cfg.synth.unwrap();
        assert_eq!(synth.n_cohorts, 6);
        assert_eq!(synth.seed, 9);
        assert_eq!(synth.horizon_count, SynthConfig::default().horizon_count);
    }
}
