use std::path::Path;

use bayesdl::experiment::{self, ExperimentConfig, Variant, CLASSIFICATION_COLUMNS, REGRESSION_COLUMNS};
use bayesdl::Error;
use sha2::{Digest, Sha256};

fn regression_json(dir: &Path) -> String {
    format!(
        r#"{{
  "name": "reg",
  "task": "regression",
  "variant": "combined",
  "network": {{"input_dim": 1, "hidden": [16, 16], "output_dim": 1, "dropout_p": 0.1, "head": "regression_hetero"}},
  "training": {{"epochs": 4, "batch_size": 32, "seed": 1}},
  "data": {{"generator": {{"hetero_regression": {{}}}}, "n_train": 200, "n_test": 100, "seed": 2, "subset": 0.5, "ood": true}},
  "inference": {{"samples": 10, "seed": 3}},
  "output_dir": {:?}
}}"#,
        dir
    )
}

fn classification_json(dir: &Path, variant: &str, head: &str) -> String {
    format!(
        r#"{{
  "name": "cls_{variant}",
  "task": "classification",
  "variant": "{variant}",
  "network": {{"input_dim": 2, "hidden": [16], "output_dim": 4, "dropout_p": 0.2, "head": "{head}"}},
  "training": {{"epochs": 4, "batch_size": 32, "seed": 1}},
  "data": {{"generator": {{"toy_classification": {{}}}}, "n_train": 200, "n_test": 100, "seed": 2, "corruption": 0.1}},
  "inference": {{"samples": 10, "seed": 3, "noise_samples": 20}},
  "output_dir": {:?}
}}"#,
        dir
    )
}

fn hash_line(path: &Path) -> Option<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().find_map(|l| l.split("config_hash: ").nth(1)).map(|h| h.trim_end_matches(" -->").trim().to_string())
}

#[test]
fn artifacts_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_json(&regression_json(dir.path())).unwrap();
    let artifact = experiment::run_experiment(&config).unwrap();

    let config_bytes = std::fs::read(artifact.dir.join("config.json")).unwrap();
    let digest = hex::encode(Sha256::digest(&config_bytes));
    assert_eq!(artifact.config_hash, digest);

    let names: Vec<String> =
        artifact.files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for expected in [
        "config.json",
        "metrics.csv",
        "train_loss.csv",
        "predictions_in_dist.csv",
        "predictions_ood.csv",
        "calibration_in_dist.csv",
        "calibration_in_dist.svg",
        "pr_ood.csv",
        "pr_ood.svg",
        "timings.json",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    for path in artifact.files.iter().filter(|p| p.file_name().unwrap() != "config.json") {
        if path.file_name().unwrap() == "timings.json" {
            let v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
            assert_eq!(v["config_hash"], digest.as_str());
        } else {
            assert_eq!(hash_line(path).as_deref(), Some(digest.as_str()), "{}", path.display());
        }
    }

    // the written config reloads to the same resolved document
    let reloaded = ExperimentConfig::load(&artifact.dir.join("config.json")).unwrap();
    assert_eq!(reloaded.resolved_json().unwrap().as_bytes(), &config_bytes[..]);
}

#[test]
fn metrics_table_has_the_size_sweep_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_json(&regression_json(dir.path())).unwrap();
    let artifact = experiment::run_experiment(&config).unwrap();
    let text = std::fs::read_to_string(artifact.dir.join("metrics.csv")).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), REGRESSION_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("reg,combined,in_dist,0.5,0,"));
    assert!(rows[1].starts_with("reg,combined,ood,0.5,0,"));
    for column in ["train_fraction", "test_set", "rmse", "aleatoric", "epistemic"] {
        assert!(REGRESSION_COLUMNS.contains(&column));
    }
    for column in ["train_fraction", "test_set", "mean_iou", "aleatoric", "epistemic"] {
        assert!(CLASSIFICATION_COLUMNS.contains(&column));
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config =
        ExperimentConfig::from_json(&classification_json(dir.path(), "combined", "classification_hetero")).unwrap();
    let snapshot = || {
        let artifact = experiment::run_experiment(&config).unwrap();
        artifact
            .files
            .iter()
            .filter(|p| p.file_name().unwrap() != "timings.json")
            .map(|p| (p.clone(), std::fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    let first = snapshot();
    assert_eq!(first, snapshot());
    assert!(first.iter().any(|(p, _)| p.extension().unwrap() == "svg"));
}

#[test]
fn every_variant_passes_the_self_check() {
    let dir = tempfile::tempdir().unwrap();
    for (variant, head) in [
        ("baseline", "classification_plain"),
        ("aleatoric", "classification_hetero"),
        ("epistemic", "classification_plain"),
        ("combined", "classification_hetero"),
    ] {
        let config = ExperimentConfig::from_json(&classification_json(dir.path(), variant, head)).unwrap();
        let out = experiment::execute(&config).unwrap();
        experiment::self_check(&out).unwrap();
        let row = &out.evaluations[0].metrics;
        let learns_noise = config.variant.learns_noise();
        assert_eq!(row.value("aleatoric") > 0.0, learns_noise, "{variant}");
        assert_eq!(row.value("epistemic") > 0.0, config.variant.samples_weights(), "{variant}");
    }
    assert_eq!(Variant::ALL.len(), 4);
}

#[test]
fn baseline_regression_has_no_spread_to_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let json = regression_json(dir.path())
        .replace("\"combined\"", "\"baseline\"")
        .replace("regression_hetero", "regression_plain");
    let config = ExperimentConfig::from_json(&json).unwrap();
    let out = experiment::execute(&config).unwrap();
    let e = &out.evaluations[0];
    assert!(e.calibration.is_none() && e.pr.is_none());
    assert!(e.metrics.value("calibration_mse").is_nan());
    assert_eq!(e.metrics.value("total"), 0.0);
}

fn config_error(json: &str) -> String {
    let err = ExperimentConfig::from_json(json).and_then(|c| c.validate().map(|_| c)).unwrap_err();
    match err {
        Error::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn config_errors_name_the_field() {
    let dir = Path::new("/tmp");
    let base = regression_json(dir);
    assert_eq!(config_error(&base.replace("\"epochs\": 4", "\"epochs\": 4, \"epochz\": 1")), "epochz");
    assert_eq!(config_error(&base.replace("\"n_test\": 100, ", "")), "n_test");
    assert_eq!(config_error(&base.replace("regression_hetero", "regression_plain")), "network.head");
    assert_eq!(config_error(&base.replace("\"dropout_p\": 0.1", "\"dropout_p\": 0.0")), "network.dropout_p");
    assert_eq!(config_error(&base.replace("\"subset\": 0.5", "\"subset\": 1.5")), "data.subset");
}
