//! Config-driven CLI for cohort-by-horizon matrix forecasting.
//!
//! Three subcommands share one TOML config file: `forecast` completes a
//! matrix, `backtest` replays history month by month and scores models,
//! `synth` generates deterministic test data. Exit codes separate failure
//! classes: 2 configuration, 3 input data, 4 model, 5 output I/O.
//! Diagnostics go to stderr as `level=.. code=.. msg=..` lines.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cohortcast_core::backtest::{
    self, BacktestError, BacktestPlan, Diagnostic, Level, ModelSpec, RunManifest,
};
use cohortcast_core::baselines::{drift_fill, linear_fill, naive_fill, read_imported_predictions};
use cohortcast_core::forecaster2d::{fill_matrix, ColumnMethod, Fill2DError, FilledMatrix};
use cohortcast_core::synth;
use cohortcast_core::{CohortCovariates, CohortMatrix, CohortMonth, MatrixError};

use config::{ModelKind, RunConfig};

#[derive(Parser)]
#[command(name = "cohortcast", version, about = "Cohort-by-horizon matrix forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill the unknown region of a cohort matrix and write the completed matrix
    Forecast(CommonArgs),
    /// Replay history month by month and score models against held-out truth
    Backtest(CommonArgs),
    /// Generate a deterministic synthetic matrix plus covariates
    Synth(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides [output] dir
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed override for synthetic generation
    #[arg(long)]
    seed: Option<u64>,

    /// Prediction month override
    #[arg(long, value_name = "YYYY-MM")]
    prediction_month: Option<String>,

    /// Validate the configuration and exit without reading data or writing output
    #[arg(long)]
    check: bool,
}

enum CliError {
    Config(String),
    Data(String),
    Model(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Model(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Data(_) => "data_error",
            CliError::Model(_) => "model_error",
            CliError::Io(_) => "io_error",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(s) | CliError::Data(s) | CliError::Model(s) | CliError::Io(s) => s,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Forecast(a) => cmd_forecast(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("level=error code={} msg={:?}", e.tag(), e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn emit(d: &Diagnostic) {
    eprintln!("{d}");
}

fn info(code: &'static str, msg: String) {
    emit(&Diagnostic { level: Level::Info, code, msg });
}

fn warn(code: &'static str, msg: String) {
    emit(&Diagnostic { level: Level::Warn, code, msg });
}

fn data_err(e: MatrixError) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Output-side matrix writes; any failure here is an I/O problem.
fn io_matrix(e: MatrixError) -> CliError {
    CliError::Io(e.to_string())
}

fn month_override(args: &CommonArgs) -> Result<Option<CohortMonth>, CliError> {
    args.prediction_month
        .as_deref()
        .map(|s| {
            s.parse()
                .map_err(|e| CliError::Config(format!("--prediction-month: {e}")))
        })
        .transpose()
}

/// `--out` wins over `[output] dir`; the latter resolves against the config
/// file, the flag against the working directory.
fn out_dir(args: &CommonArgs, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    if let Some(o) = &args.out {
        return Ok(o.clone());
    }
    match &cfg.output {
        Some(o) => Ok(config::resolve(&args.config, &o.dir)),
        None => Err(CliError::Config(
            "no output directory: add an [output] section or pass --out".into(),
        )),
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if std::fs::metadata(path).map(|m| m.is_file()).unwrap_or(false) {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json + "\n").map_err(io_err)
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::TwoDArimax => "2d_arimax",
        ModelKind::Naive => "naive",
        ModelKind::Drift => "drift",
        ModelKind::Linear => "linear",
    }
}

/// A prediction month override means "pretend now is M": cells whose event
/// month has reached M are masked away before staircase validation, so a
/// deeper truth file can be replayed from any earlier vantage point.
/// Claiming a month later than the data supports leaves staircase gaps and
/// is rejected.
fn read_matrix(
    path: &Path,
    horizon_count: Option<usize>,
    pm: Option<CohortMonth>,
) -> Result<CohortMatrix, CliError> {
    let mut records = CohortMatrix::read_long_records(path).map_err(data_err)?;
    if let Some(pm) = pm {
        records.retain(|r| r.cohort_month.add_months(r.months_since_event as i32) < pm);
    }
    CohortMatrix::from_records(&records, horizon_count, pm).map_err(data_err)
}

/// Scale factor and working copy for fits; `None` factor means pass-through.
fn scaled_working(m: &CohortMatrix, scale_by_max: bool) -> (Option<f64>, CohortMatrix) {
    if !scale_by_max {
        return (None, m.clone());
    }
    match m.max_value() {
        Some(max) if max > 0.0 => (Some(max), m.scaled(1.0 / max)),
        _ => {
            warn(
                "scaling_skipped",
                "matrix maximum is not positive; scaling skipped".into(),
            );
            (None, m.clone())
        }
    }
}

fn cmd_forecast(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config).map_err(CliError::Config)?;
    let input = cfg
        .input
        .clone()
        .ok_or_else(|| CliError::Config("forecast needs an [input] section".into()))?;
    let model = cfg.model.clone().unwrap_or_default();

    // Everything up to the check gate validates the config tree alone and
    // never touches the filesystem beyond the config file itself.
    model.estimation().map_err(CliError::Config)?;
    model.fallback.to_policy().map_err(CliError::Config)?;
    let pm_flag = month_override(args)?;
    let needs_cov = !model.covariate_names.is_empty()
        && matches!(model.kind, ModelKind::TwoDArimax | ModelKind::Linear);
    if needs_cov && input.covariates.is_none() {
        return Err(CliError::Config(
            "model.covariate_names is set but [input] has no covariates file".into(),
        ));
    }
    let dir = out_dir(args, &cfg)?;
    if args.check {
        info("config_ok", "configuration valid; nothing written".into());
        return Ok(());
    }

    // Referenced inputs must exist before anything is read or written, so a
    // bad path can never leave partial output behind.
    let values_path = config::resolve(&args.config, &input.values);
    require_file(&values_path, "input values")?;
    let cov_path = input
        .covariates
        .as_ref()
        .map(|p| config::resolve(&args.config, p));
    if let Some(p) = &cov_path {
        require_file(p, "covariates file")?;
    }

    let pm = pm_flag.or(input.prediction_month);
    let m = read_matrix(&values_path, input.horizon_count, pm)?;
    let cov = match &cov_path {
        Some(p) => CohortCovariates::read_csv(p).map_err(data_err)?,
        None => CohortCovariates::empty(),
    };

    let (scale_factor, working) = scaled_working(&m, input.scale_by_max);
    let fc = model
        .forecast_config(working.horizon_count())
        .map_err(CliError::Config)?;
    let filled = match model.kind {
        ModelKind::TwoDArimax => fill_matrix(&working, &cov, &fc).map_err(|e| match e {
            Fill2DError::CovariateMissing(me) => CliError::Data(me.to_string()),
            other => CliError::Model(other.to_string()),
        })?,
        ModelKind::Naive => naive_fill(&working),
        ModelKind::Drift => drift_fill(&working),
        ModelKind::Linear => {
            linear_fill(&working, &cov, &model.covariate_names).map_err(data_err)?
        }
    };
    let filled: FilledMatrix = match scale_factor {
        Some(f) => filled.unscaled_into(&m, f),
        None => filled,
    };

    let mut n_predicted = 0usize;
    let mut n_floored = 0usize;
    for c in filled.column_diagnostics() {
        n_predicted += c.n_predicted;
        n_floored += c.floored;
        match &c.method {
            ColumnMethod::Rule { kind, reason }
                if c.n_predicted > 0 && model.kind == ModelKind::TwoDArimax =>
            {
                warn(
                    "fallback_used",
                    format!("column {} used {}: {reason}", c.u, kind.name()),
                );
            }
            ColumnMethod::Arimax { order, converged: false } => {
                warn(
                    "non_convergence",
                    format!("column {} order {order} stopped before convergence", c.u),
                );
            }
            _ => {}
        }
    }
    if n_floored > 0 {
        info(
            "floored",
            format!("{n_floored} negative predictions clamped to zero"),
        );
    }

    std::fs::create_dir_all(&dir).map_err(io_err)?;
    filled
        .write_wide_csv(&dir.join("filled.csv"))
        .map_err(io_matrix)?;
    filled
        .write_provenance_csv(&dir.join("provenance.csv"))
        .map_err(io_matrix)?;
    let mut echo_cfg = cfg.clone();
    if let (Some(pm), Some(i)) = (pm_flag, echo_cfg.input.as_mut()) {
        i.prediction_month = Some(pm);
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: "forecast".to_string(),
        seed: None,
        scale_factor,
        start_month: None,
        end_month: None,
        models: vec![kind_name(model.kind).to_string()],
        n_records: n_predicted,
        truth_gaps: 0,
        model_failures: 0,
        no_data: n_predicted == 0,
        config_echo: echo(&echo_cfg),
    };
    write_manifest(&dir, &manifest)?;
    info(
        "done",
        format!("predicted {n_predicted} cells; wrote {}", dir.display()),
    );
    Ok(())
}

fn cmd_backtest(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config).map_err(CliError::Config)?;
    let input = cfg
        .input
        .clone()
        .ok_or_else(|| CliError::Config("backtest needs an [input] section".into()))?;
    let bt = cfg
        .backtest
        .clone()
        .ok_or_else(|| CliError::Config("backtest needs a [backtest] section".into()))?;
    let model = cfg.model.clone().unwrap_or_default();

    model.estimation().map_err(CliError::Config)?;
    model.fallback.to_policy().map_err(CliError::Config)?;
    let pm_flag = month_override(args)?;
    for name in &bt.models {
        if !["2d_arimax", "naive", "drift", "linear"].contains(&name.as_str()) {
            return Err(CliError::Config(format!(
                "unknown model '{name}'; built-ins: 2d_arimax, naive, drift, linear"
            )));
        }
    }
    let uses_cov = bt
        .models
        .iter()
        .any(|n| n == "2d_arimax" || n == "linear");
    if uses_cov && !model.covariate_names.is_empty() && input.covariates.is_none() {
        return Err(CliError::Config(
            "model.covariate_names is set but [input] has no covariates file".into(),
        ));
    }
    let dir = out_dir(args, &cfg)?;
    if args.check {
        info("config_ok", "configuration valid; nothing written".into());
        return Ok(());
    }

    let values_path = config::resolve(&args.config, &input.values);
    require_file(&values_path, "input values")?;
    let cov_path = input
        .covariates
        .as_ref()
        .map(|p| config::resolve(&args.config, p));
    if let Some(p) = &cov_path {
        require_file(p, "covariates file")?;
    }
    let imported_paths: Vec<PathBuf> = bt
        .imported
        .iter()
        .map(|imp| config::resolve(&args.config, &imp.path))
        .collect();
    for p in &imported_paths {
        require_file(p, "imported predictions file")?;
    }

    let pm = pm_flag.or(input.prediction_month);
    let truth = read_matrix(&values_path, input.horizon_count, pm)?;
    let cov = match &cov_path {
        Some(p) => CohortCovariates::read_csv(p).map_err(data_err)?,
        None => CohortCovariates::empty(),
    };

    let (scale_factor, working) = scaled_working(&truth, input.scale_by_max);
    let fc = model
        .forecast_config(working.horizon_count())
        .map_err(CliError::Config)?;
    let mut models = Vec::new();
    for name in &bt.models {
        models.push(match name.as_str() {
            "2d_arimax" => ModelSpec::TwoD(Box::new(fc.clone())),
            "naive" => ModelSpec::Naive,
            "drift" => ModelSpec::Drift,
            _ => ModelSpec::Linear {
                covariate_names: model.covariate_names.clone(),
            },
        });
    }
    for (imp, path) in bt.imported.iter().zip(&imported_paths) {
        let mut all = read_imported_predictions(path).map_err(data_err)?;
        let mut predictions = all.remove(&imp.name).ok_or_else(|| {
            CliError::Data(format!(
                "{} has no rows for model '{}'",
                path.display(),
                imp.name
            ))
        })?;
        // Imported files carry original units; move them into the scaled
        // frame the native models are scored in.
        if let Some(f) = scale_factor {
            for v in predictions.values_mut() {
                *v /= f;
            }
        }
        models.push(ModelSpec::Imported {
            name: imp.name.clone(),
            predictions,
        });
    }

    let plan = BacktestPlan {
        start_month: bt.start,
        end_month: bt.end,
        models,
    };
    let mut result = backtest::run(&working, &cov, &plan).map_err(|e| match e {
        BacktestError::Matrix(me) => CliError::Data(me.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    if let Some(f) = scale_factor {
        for r in &mut result.records {
            r.actual *= f;
            r.predicted *= f;
        }
    }
    for d in &result.diagnostics {
        emit(d);
    }

    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let mut echo_cfg = cfg.clone();
    if let (Some(pm), Some(i)) = (pm_flag, echo_cfg.input.as_mut()) {
        i.prediction_month = Some(pm);
    }
    let mut manifest = RunManifest::for_backtest(&plan, &result);
    manifest.version = env!("CARGO_PKG_VERSION").to_string();
    manifest.seed = args.seed;
    manifest.scale_factor = scale_factor;
    manifest.config_echo = echo(&echo_cfg);
    backtest::emit_report(&result, &manifest, &dir).map_err(io_err)?;
    info(
        "done",
        format!(
            "scored {} predictions over {} gap(s), {} failure(s); wrote {}",
            result.records.len(),
            result.truth_gaps,
            result.model_failures,
            dir.display()
        ),
    );
    Ok(())
}

fn cmd_synth(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config).map_err(CliError::Config)?;
    let mut synth_cfg = cfg
        .synth
        .clone()
        .ok_or_else(|| CliError::Config("synth needs a [synth] section".into()))?;
    if let Some(seed) = args.seed {
        synth_cfg.seed = seed;
    }
    synth_cfg
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let dir = out_dir(args, &cfg)?;
    if args.check {
        info("config_ok", "configuration valid; nothing written".into());
        return Ok(());
    }

    let (values, cov) = synth::generate(&synth_cfg).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    values
        .write_long_csv(&dir.join("values.csv"))
        .map_err(io_matrix)?;
    cov.write_csv(&dir.join("covariates.csv")).map_err(io_matrix)?;
    let mut echo_cfg = cfg.clone();
    echo_cfg.synth = Some(synth_cfg.clone());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: "synth".to_string(),
        seed: Some(synth_cfg.seed),
        scale_factor: None,
        start_month: Some(synth_cfg.start_month),
        end_month: None,
        models: Vec::new(),
        n_records: values.known_cell_count(),
        truth_gaps: 0,
        model_failures: 0,
        no_data: false,
        config_echo: echo(&echo_cfg),
    };
    write_manifest(&dir, &manifest)?;
    info(
        "done",
        format!(
            "generated {} cells across {} cohorts; wrote {}",
            values.known_cell_count(),
            values.n_cohorts(),
            dir.display()
        ),
    );
    Ok(())
}
