//! End-to-end tests driving the compiled binary: exit codes, validation
//! behavior, and the synth -> forecast -> backtest pipeline.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cohortcast"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cohortcast")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("no exit code")
}

fn stderr_of(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The five-cohort staircase used across the fill tests: September 2023
/// through January 2024, observed through January, predicting from February.
fn staircase_csv() -> String {
    let rows: [(&str, &[f64]); 5] = [
        ("2023-09", &[26000.0, 27000.0, 28000.0, 29000.0, 30000.0]),
        ("2023-10", &[31000.0, 32000.0, 33000.0, 34000.0]),
        ("2023-11", &[27000.0, 28000.0, 29000.0]),
        ("2023-12", &[29000.0, 30000.0]),
        ("2024-01", &[30000.0]),
    ];
    let mut out = String::from("cohort_month,months_since_event,value\n");
    for (month, values) in rows {
        for (u, v) in values.iter().enumerate() {
            out.push_str(&format!("{month},{u},{v}\n"));
        }
    }
    out
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

#[test]
fn help_exits_zero_without_output_files() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("forecast"), "{text}");
    assert!(text.contains("backtest"), "{text}");
    assert!(text.contains("synth"), "{text}");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = run(&["forecast", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("config_error"), "{}", stderr_of(&out));
}

#[test]
fn malformed_toml_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "[input\nvalues = broken");
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn forecast_without_input_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "[output]\ndir = \"out\"\n");
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("input"), "{}", stderr_of(&out));
}

#[test]
fn check_mode_validates_without_reading_data_or_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    // The values file does not exist; --check must still pass because it
    // only validates the config tree.
    write(
        &cfg,
        "[input]\nvalues = \"missing.csv\"\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap(), "--check"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(!dir.path().join("out").exists());
    assert!(stderr_of(&out).contains("config_ok"));
}

#[test]
fn check_mode_still_rejects_bad_month_strings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"v.csv\"\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&[
        "forecast",
        "--config",
        cfg.to_str().unwrap(),
        "--check",
        "--prediction-month",
        "2024-00",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_values_file_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"missing.csv\"\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_covariates_file_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
        [input]
        values = "values.csv"
        covariates = "missing_covariates.csv"

        [model]
        covariate_names = ["x"]

        [output]
        dir = "out"
        "#,
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn covariate_names_without_covariates_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"values.csv\"\n\n[model]\ncovariate_names = [\"x\"]\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_csv_header_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), "month,u,revenue\n2024-01,0,5\n");
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"values.csv\"\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("data_error"));
}

#[test]
fn column_with_no_observations_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    // Two cohorts, three columns: column 2 has no elapsed cells at all.
    write(
        &dir.path().join("values.csv"),
        "cohort_month,months_since_event,value\n2023-01,0,10\n2023-01,1,11\n2023-02,0,12\n",
    );
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"values.csv\"\nhorizon_count = 3\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("model_error"));
}

#[test]
fn staircase_forecast_writes_complete_matrix_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"values.csv\"\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let wide = fs::read_to_string(dir.path().join("out/filled.csv")).unwrap();
    let populated: usize = wide
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).filter(|f| !f.is_empty()).count())
        .sum();
    assert_eq!(populated, 25, "{wide}");

    let prov = fs::read_to_string(dir.path().join("out/provenance.csv")).unwrap();
    let predicted = prov.lines().filter(|l| l.contains(",PREDICTED,")).count();
    let observed = prov.lines().filter(|l| l.contains(",OBSERVED,")).count();
    assert_eq!(predicted, 10);
    assert_eq!(observed, 15);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "forecast");
    assert_eq!(manifest["n_records"], 10);
    assert_eq!(manifest["models"][0], "2d_arimax");
    assert_eq!(manifest["no_data"], false);
}

#[test]
fn fully_known_input_predicts_nothing_and_echoes_values() {
    let dir = tempfile::tempdir().unwrap();
    let synth_cfg = dir.path().join("synth.toml");
    write(
        &synth_cfg,
        "[synth]\nn_cohorts = 6\nhorizon_count = 3\nseed = 5\n\n[output]\ndir = \"data\"\n",
    );
    let out = run(&["synth", "--config", synth_cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"data/values.csv\"\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let prov = fs::read_to_string(dir.path().join("out/provenance.csv")).unwrap();
    assert_eq!(prov.lines().filter(|l| l.contains(",PREDICTED,")).count(), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["no_data"], true);

    // Every input value survives in the wide output unchanged.
    let values = fs::read_to_string(dir.path().join("data/values.csv")).unwrap();
    let wide = fs::read_to_string(dir.path().join("out/filled.csv")).unwrap();
    for line in values.lines().skip(1) {
        let v = line.rsplit(',').next().unwrap();
        assert!(wide.contains(v), "missing value {v}");
    }
}

#[test]
fn prediction_month_flag_masks_a_full_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let synth_cfg = dir.path().join("synth.toml");
    write(
        &synth_cfg,
        "[synth]\nn_cohorts = 10\nhorizon_count = 4\nstart_month = \"2020-01\"\nseed = 7\n\n[output]\ndir = \"data\"\n",
    );
    assert_eq!(code(&run(&["synth", "--config", synth_cfg.to_str().unwrap()])), 0);

    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
        [input]
        values = "data/values.csv"
        covariates = "data/covariates.csv"

        [model]
        covariate_names = ["x"]

        [output]
        dir = "out"
        "#,
    );
    let out = run(&[
        "forecast",
        "--config",
        cfg.to_str().unwrap(),
        "--prediction-month",
        "2020-08",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let prov = fs::read_to_string(dir.path().join("out/provenance.csv")).unwrap();
    // Seven cohorts remain visible (2020-01 .. 2020-07); the masked region
    // of a 7x4 staircase at 2020-08 holds 1 + 2 + 3 = 6 cells.
    let predicted = prov.lines().filter(|l| l.contains(",PREDICTED,")).count();
    let observed = prov.lines().filter(|l| l.contains(",OBSERVED,")).count();
    assert_eq!(predicted, 6, "{prov}");
    assert_eq!(observed, 7 * 4 - 6);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config_echo"]["input"]["prediction_month"], "2020-08");
}

#[test]
fn prediction_month_beyond_coverage_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"values.csv\"\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&[
        "forecast",
        "--config",
        cfg.to_str().unwrap(),
        "--prediction-month",
        "2024-06",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr_of(&out));
}

#[test]
fn out_flag_overrides_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[input]\nvalues = \"values.csv\"\n\n[model]\nkind = \"naive\"\n\n[output]\ndir = \"ignored\"\n",
    );
    let override_dir = dir.path().join("elsewhere");
    let out = run(&[
        "forecast",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        override_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(override_dir.join("filled.csv").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn baseline_kinds_run_through_the_same_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    for kind in ["naive", "drift", "linear"] {
        let cfg = dir.path().join(format!("{kind}.toml"));
        write(
            &cfg,
            &format!(
                "[input]\nvalues = \"values.csv\"\n\n[model]\nkind = \"{kind}\"\n\n[output]\ndir = \"out_{kind}\"\n"
            ),
        );
        let out = run(&["forecast", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{kind}: {}", stderr_of(&out));
        let manifest: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("out_{kind}/manifest.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["models"][0], kind);
    }
}

#[test]
fn synth_rejects_out_of_range_rho() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[synth]\nprev_column_rho = 1.5\n\n[output]\ndir = \"out\"\n",
    );
    let out = run(&["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn synth_seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "[synth]\nn_cohorts = 4\nhorizon_count = 2\n\n[output]\ndir = \"a\"\n",
    );
    assert_eq!(code(&run(&["synth", "--config", cfg.to_str().unwrap()])), 0);
    let b = dir.path().join("b");
    assert_eq!(
        code(&run(&[
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
            "--seed",
            "99",
        ])),
        0
    );
    let first = fs::read_to_string(dir.path().join("a/values.csv")).unwrap();
    let second = fs::read_to_string(b.join("values.csv")).unwrap();
    assert_ne!(first, second);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["config_echo"]["synth"]["seed"], 99);
}

#[test]
fn backtest_writes_the_full_report_directory() {
    let dir = tempfile::tempdir().unwrap();
    let synth_cfg = dir.path().join("synth.toml");
    write(
        &synth_cfg,
        "[synth]\nn_cohorts = 12\nhorizon_count = 4\nstart_month = \"2020-01\"\nseed = 11\n\n[output]\ndir = \"data\"\n",
    );
    assert_eq!(code(&run(&["synth", "--config", synth_cfg.to_str().unwrap()])), 0);

    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
        [input]
        values = "data/values.csv"

        [backtest]
        start = "2020-09"
        end = "2020-10"
        models = ["naive", "drift"]

        [output]
        dir = "report"
        "#,
    );
    let out = run(&["backtest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    for f in [
        "records.csv",
        "summary.csv",
        "by_horizon.csv",
        "by_prediction_month.csv",
        "histogram.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join("report").join(f).exists(), "missing {f}");
    }
    let summary = fs::read_to_string(dir.path().join("report/summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("naive,")), "{summary}");
    assert!(summary.lines().any(|l| l.starts_with("drift,")), "{summary}");
}

#[test]
fn backtest_range_outside_truth_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
        [input]
        values = "values.csv"

        [backtest]
        start = "2023-11"
        end = "2025-01"
        models = ["naive"]

        [output]
        dir = "report"
        "#,
    );
    let out = run(&["backtest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));
    assert!(!dir.path().join("report").exists());
}

#[test]
fn unknown_backtest_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
        [input]
        values = "values.csv"

        [backtest]
        start = "2023-11"
        end = "2023-12"
        models = ["bogus"]

        [output]
        dir = "report"
        "#,
    );
    let out = run(&["backtest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("bogus"));
}

#[test]
fn imported_predictions_are_scored_alongside_native_models() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    write(
        &dir.path().join("vendor.csv"),
        "cohort_month,u,value,model_name\n2023-12,1,29500,vendor\n2024-01,0,29800,vendor\n2023-12,1,1,other\n",
    );
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
        [input]
        values = "values.csv"

        [backtest]
        start = "2024-01"
        end = "2024-01"
        models = ["naive"]

        [[backtest.imported]]
        name = "vendor"
        path = "vendor.csv"

        [output]
        dir = "report"
        "#,
    );
    let out = run(&["backtest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let records = fs::read_to_string(dir.path().join("report/records.csv")).unwrap();
    assert!(records.lines().any(|l| l.contains(",vendor,")), "{records}");
    let summary = fs::read_to_string(dir.path().join("report/summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("vendor,")), "{summary}");
}

#[test]
fn scaling_changes_no_observed_values_in_output() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("values.csv"), &staircase_csv());
    for (name, scale) in [("plain", "false"), ("scaled", "true")] {
        let cfg = dir.path().join(format!("{name}.toml"));
        write(
            &cfg,
            &format!(
                "[input]\nvalues = \"values.csv\"\nscale_by_max = {scale}\n\n[model]\nkind = \"naive\"\n\n[output]\ndir = \"out_{name}\"\n"
            ),
        );
        assert_eq!(code(&run(&["forecast", "--config", cfg.to_str().unwrap()])), 0);
    }
    let plain = fs::read_to_string(dir.path().join("out_plain/filled.csv")).unwrap();
    let scaled = fs::read_to_string(dir.path().join("out_scaled/filled.csv")).unwrap();

    // The 2023-09 row is fully observed; scaling must leave it untouched to
    // the byte.
    assert_eq!(plain.lines().nth(1), scaled.lines().nth(1));

    // Predictions go through a divide-and-multiply round trip, so they only
    // match to rounding.
    let parse = |text: &str| -> Vec<Option<f64>> {
        text.lines()
            .skip(1)
            .flat_map(|l| {
                l.split(',')
                    .skip(1)
                    .map(|f| if f.is_empty() { None } else { Some(f.parse().unwrap()) })
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let a = parse(&plain);
    let b = parse(&scaled);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        match (x, y) {
            (Some(x), Some(y)) => {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}")
            }
            (None, None) => {}
            other => panic!("population mismatch: {other:?}"),
        }
    }

    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out_scaled/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["scale_factor"], 34000.0);
}
