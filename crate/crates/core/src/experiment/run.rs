use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, Generator, TaskKind};
use super::plot::emit_plot;
use super::table::{emit_table, Cell, MetricsRow};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::eval::{self, CalibrationCurve, CurveFile, Outcome, PrCurve};
use crate::fsutil;
use crate::network::{init_network, Parameters};
use crate::predict::{self, ClassificationDecomposition, RegressionDecomposition};
use crate::synthdata::{self, ClassificationConfig, Dataset};
use crate::train::{self, TrainReport};

pub const IN_DIST: &str = "in_dist";
pub const OOD: &str = "ood";

/// Train, held-out test and optional shifted test sets of one run.
#[derive(Clone, Debug)]
pub struct RunData {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Option<Dataset>,
}

/// Generates the data described by `config`.
///
/// Train and test rows come from one generator call, split at `n_train`;
/// the training part is then subset and corrupted. Test sets stay clean.
pub fn prepare_data(config: &ExperimentConfig) -> Result<RunData> {
    let d = &config.data;
    let total = d.n_train + d.n_test;
    let all = match &d.generator {
        Generator::HeteroRegression(c) => synthdata::gen_hetero_regression(total, d.seed, c)?,
        Generator::ToyClassification(c) => synthdata::gen_toy_classification(total, d.seed, c)?,
    };
    let mut train = all.select(&(0..d.n_train).collect::<Vec<_>>());
    let test = all.select(&(d.n_train..total).collect::<Vec<_>>());
    if d.subset < 1.0 {
        train = synthdata::subset(&train, d.subset, d.seed)?;
    }
    if d.corruption > 0.0 {
        train = synthdata::corrupt_labels(&train, d.corruption, d.seed)?;
    }
    let ood = if d.ood {
        Some(synthdata::ood_shift(&d.generator.data_config(), d.n_test, d.seed, d.ood_shift)?.dataset)
    } else {
        None
    };
    Ok(RunData { train, test, ood })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Regression(RegressionDecomposition<f64>),
    Classification(ClassificationDecomposition<f64>),
}

/// Predictions and scores on one test set.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub test_set: &'static str,
    pub dataset: Dataset,
    pub prediction: Prediction,
    pub metrics: MetricsRow,
    /// Absent when the model reports no predictive spread.
    pub calibration: Option<CalibrationCurve>,
    pub pr: Option<PrCurve>,
}

/// Wall-clock seconds per phase. Reported, never compared.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub data: f64,
    pub train: f64,
    pub predict: f64,
    pub evaluate: f64,
}

/// Everything a run produces, before anything is written.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub params: Parameters<f64>,
    pub report: TrainReport,
    pub evaluations: Vec<Evaluation>,
    pub timings: Timings,
}

impl RunOutput {
    pub fn evaluation(&self, test_set: &str) -> Option<&Evaluation> {
        self.evaluations.iter().find(|e| e.test_set == test_set)
    }
}

/// Files written by [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub name: String,
    pub task: TaskKind,
    pub config_hash: String,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub metrics: Vec<MetricsRow>,
}

pub const REGRESSION_COLUMNS: [&str; 12] = [
    "run",
    "variant",
    "test_set",
    "train_fraction",
    "corruption",
    "n",
    "rmse",
    "rmse_truth",
    "epistemic",
    "aleatoric",
    "total",
    "calibration_mse",
];

pub const CLASSIFICATION_COLUMNS: [&str; 13] = [
    "run",
    "variant",
    "test_set",
    "train_fraction",
    "corruption",
    "n",
    "accuracy",
    "accuracy_truth",
    "mean_iou",
    "epistemic",
    "aleatoric",
    "entropy",
    "calibration_mse",
];

pub fn columns(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::Regression => &REGRESSION_COLUMNS,
        TaskKind::Classification => &CLASSIFICATION_COLUMNS,
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Trains and evaluates without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let config_hash = config.hash()?;
    let mut timings = Timings::default();

    let clock = Instant::now();
    let data = prepare_data(config)?;
    timings.data = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let spec = &config.network;
    let mut params = init_network::<f64>(spec, config.training.seed)?;
    let report = train::train(
        spec,
        &mut params,
        &data.train.inputs,
        &data.train.train_targets(),
        config.objective(),
        &config.training.train_config(),
    )?;
    timings.train = clock.elapsed().as_secs_f64();

    let mut evaluations = Vec::new();
    let sets = std::iter::once((IN_DIST, data.test)).chain(data.ood.map(|d| (OOD, d)));
    for (name, ds) in sets {
        evaluations.push(evaluate(config, &params, name, ds, &mut timings)?);
    }
    Ok(RunOutput { config: config.clone(), config_hash, params, report, evaluations, timings })
}

fn evaluate(
    config: &ExperimentConfig,
    params: &Parameters<f64>,
    test_set: &'static str,
    ds: Dataset,
    timings: &mut Timings,
) -> Result<Evaluation> {
    let spec = &config.network;
    let inf = &config.inference;
    let clock = Instant::now();
    let samples = if config.variant.samples_weights() {
        predict::mc_dropout_predict(params, spec, &ds.inputs, inf.samples, inf.seed)?
    } else {
        predict::map_predict(params, spec, &ds.inputs)?
    };
    let prediction = match config.task {
        TaskKind::Regression => Prediction::Regression(predict::decompose_regression(&samples)?),
        TaskKind::Classification => {
            let alea = if spec.head.is_hetero() {
                Some(predict::aleatoric_classification_entropy(params, spec, &ds.inputs, inf.noise_samples, inf.seed)?)
            } else {
                None
            };
            Prediction::Classification(predict::decompose_classification(&samples, alea)?)
        }
    };
    timings.predict += clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut cells: Vec<(&'static str, Cell)> = vec![
        ("run", Cell::Text(config.name.clone())),
        ("variant", Cell::Text(config.variant.name().into())),
        ("test_set", Cell::Text(test_set.into())),
        ("train_fraction", Cell::Real(config.data.subset)),
        ("corruption", Cell::Real(config.data.corruption)),
        ("n", Cell::Count(ds.len())),
    ];
    let ev = &config.evaluation;
    let (calibration, pr) = match (&prediction, &config.data.generator) {
        (Prediction::Regression(d), Generator::HeteroRegression(gen)) => {
            let y = ds.regression_targets().expect("regression data");
            let mu = d.predictive_mean.data();
            let truth: Vec<f64> = (0..ds.len()).map(|i| gen.mean_fn(ds.inputs.row(i))).collect();
            cells.push(("rmse", Cell::Real(eval::rmse(mu, y)?)));
            cells.push(("rmse_truth", Cell::Real(eval::rmse(mu, &truth)?)));
            cells.push(("epistemic", Cell::Real(mean(d.epistemic_var.data().iter().copied()))));
            cells.push(("aleatoric", Cell::Real(mean(d.aleatoric_var.data().iter().copied()))));
            cells.push(("total", Cell::Real(mean(d.total_var.data().iter().copied()))));
            let total = d.total_var.data();
            if total.iter().all(|&v| v > 0.0) {
                let cal = eval::regression_calibration(mu, total, y, spec.likelihood, &ev.levels)?;
                let residuals: Vec<f64> = mu.iter().zip(y).map(|(m, t)| m - t).collect();
                let pr = eval::precision_recall_uncertainty(total, Outcome::Error(&residuals), &ev.percentiles)?;
                (Some(cal), Some(pr))
            } else {
                (None, None)
            }
        }
        (Prediction::Classification(d), Generator::ToyClassification(gen)) => {
            let labels = ds.labels().expect("classification data");
            let pred: Vec<usize> = (0..labels.len()).map(|i| predict::argmax(d.mean_probs.row(i))).collect();
            let m = eval::classification_metrics(&pred, labels, gen.classes)?;
            let clean = if test_set == OOD {
                let shift = config.data.ood_shift;
                ClassificationConfig { offset: [gen.offset[0] + shift, gen.offset[1]], ..gen.clone() }
            } else {
                gen.clone()
            };
            let bayes =
                (0..labels.len()).filter(|&i| pred[i] == predict::argmax(&clean.posterior(ds.inputs.row(i)))).count();
            cells.push(("accuracy", Cell::Real(m.accuracy)));
            cells.push(("accuracy_truth", Cell::Real(bayes as f64 / labels.len() as f64)));
            cells.push(("mean_iou", Cell::Real(m.mean_iou)));
            let epi = d.epistemic_logit_var.as_ref().map_or(0.0, |v| mean(v.iter().copied()));
            let alea = d.aleatoric_entropy.as_ref().map_or(0.0, |v| mean(v.iter().copied()));
            cells.push(("epistemic", Cell::Real(epi)));
            cells.push(("aleatoric", Cell::Real(alea)));
            cells.push(("entropy", Cell::Real(mean(d.predictive_entropy.iter().copied()))));
            let cal = eval::classification_calibration(&d.mean_probs, labels, ev.bins)?;
            let correct: Vec<bool> = pred.iter().zip(labels).map(|(p, l)| p == l).collect();
            let pr =
                eval::precision_recall_uncertainty(&d.predictive_entropy, Outcome::Correct(&correct), &ev.percentiles)?;
            (Some(cal), Some(pr))
        }
        _ => unreachable!("task and generator agree after validation"),
    };
    let cal_mse = calibration.as_ref().map(eval::calibration_mse).transpose()?.unwrap_or(f64::NAN);
    cells.push(("calibration_mse", Cell::Real(cal_mse)));
    timings.evaluate += clock.elapsed().as_secs_f64();

    Ok(Evaluation {
        test_set,
        dataset: ds,
        prediction,
        metrics: MetricsRow { task: config.task, cells },
        calibration,
        pr,
    })
}

/// Checks the decomposition and probability invariants of a finished run.
pub fn self_check(out: &RunOutput) -> Result<()> {
    let fail = |msg: String| Err(Error::Property(msg));
    for e in &out.evaluations {
        match &e.prediction {
            Prediction::Regression(d) => {
                let (epi, alea, total) = (d.epistemic_var.data(), d.aleatoric_var.data(), d.total_var.data());
                for i in 0..total.len() {
                    if total[i] != epi[i] + alea[i] {
                        return fail(format!("{}: total_var != epistemic + aleatoric at {i}", e.test_set));
                    }
                    if !(epi[i] >= 0.0 && alea[i] >= 0.0) {
                        return fail(format!("{}: negative variance at {i}", e.test_set));
                    }
                }
                if out.config.network.dropout_p == 0.0 && epi.iter().any(|&v| v != 0.0) {
                    return fail(format!("{}: epistemic variance without dropout", e.test_set));
                }
            }
            Prediction::Classification(d) => {
                let c = d.mean_probs.last_dim();
                let log_c = (c as f64).ln();
                for i in 0..d.mean_probs.rows() {
                    let sum: f64 = d.mean_probs.row(i).iter().sum();
                    if (sum - 1.0).abs() > 1e-12 {
                        return fail(format!("{}: probabilities of row {i} sum to {sum}", e.test_set));
                    }
                    let h = d.predictive_entropy[i];
                    if !(-1e-12..=log_c + 1e-12).contains(&h) {
                        return fail(format!("{}: entropy {h} outside [0, ln C] at row {i}", e.test_set));
                    }
                }
            }
        }
        if let Some(cal) = &e.calibration {
            if cal.observed.iter().any(|o| !(0.0..=1.0).contains(o)) {
                return fail(format!("{}: calibration frequency outside [0, 1]", e.test_set));
            }
        }
    }
    Ok(())
}

/// Writes every artifact of `out` under its output directory.
pub fn write_artifacts(out: &RunOutput) -> Result<RunArtifact> {
    let config = &out.config;
    let dir = config.output_dir.join(&config.name);
    std::fs::create_dir_all(&dir)?;
    let tag = vec![format!("config_hash: {}", out.config_hash)];
    let mut files = Vec::new();
    let mut put = |name: String| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };

    fsutil::write_atomic(&put("config.json".into()), config.resolved_json()?.as_bytes())?;
    let rows: Vec<MetricsRow> = out.evaluations.iter().map(|e| e.metrics.clone()).collect();
    emit_table(&rows, columns(config.task), &tag, &put("metrics.csv".into()))?;
    let losses: Vec<Vec<String>> =
        out.report.epoch_losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), super::table::sig6(*l)]).collect();
    let header = vec!["epoch".to_string(), "loss".to_string()];
    fsutil::write_atomic(&put("train_loss.csv".into()), &fsutil::csv_bytes(&tag, Some(&header), &losses)?)?;

    for e in &out.evaluations {
        let set = e.test_set;
        match &e.prediction {
            Prediction::Regression(d) => {
                let y = e.dataset.regression_targets().expect("regression data");
                let recs = predict::regression_records(y, d)?;
                predict::write_regression_dump(&put(format!("predictions_{set}.csv")), &tag, &recs)?;
            }
            Prediction::Classification(d) => {
                let labels = e.dataset.labels().expect("classification data");
                let recs = predict::classification_records(labels, d)?;
                predict::write_classification_dump(&put(format!("predictions_{set}.csv")), &tag, &recs)?;
            }
        }
        if let Some(cal) = &e.calibration {
            eval::write_calibration_csv(&put(format!("calibration_{set}.csv")), &tag, cal)?;
            emit_plot(&CurveFile::Calibration(cal.clone()), &put(format!("calibration_{set}.svg")), &tag)?;
        }
        if let Some(pr) = &e.pr {
            eval::write_pr_csv(&put(format!("pr_{set}.csv")), &tag, pr)?;
            emit_plot(&CurveFile::Pr(pr.clone()), &put(format!("pr_{set}.svg")), &tag)?;
        }
    }

    #[derive(Serialize)]
    struct TimingFile<'a> {
        config_hash: &'a str,
        seconds: &'a Timings,
    }
    let timing = serde_json::to_string_pretty(&TimingFile { config_hash: &out.config_hash, seconds: &out.timings })?;
    fsutil::write_atomic(&put("timings.json".into()), timing.as_bytes())?;

    Ok(RunArtifact {
        name: config.name.clone(),
        task: config.task,
        config_hash: out.config_hash.clone(),
        dir,
        files,
        metrics: rows,
    })
}

/// Trains, evaluates and writes all artifacts to `output_dir/name/`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifact> {
    write_artifacts(&execute(config)?)
}

/// Predicted noise scale `sigma(x)` of a learned-noise regression model at
/// MAP weights, one value per row of `x`.
pub fn predicted_sigma(config: &ExperimentConfig, params: &Parameters<f64>, x: &Tensor<f64>) -> Result<Vec<f64>> {
    let samples = predict::map_predict(params, &config.network, x)?;
    let var = samples.scales.ok_or_else(|| Error::invalid("predicted_sigma: model has no noise head"))?;
    let lik = config.network.likelihood;
    Ok(var[0]
        .data()
        .iter()
        .map(|&v| match lik {
            crate::losses::Likelihood::Gaussian => v.sqrt(),
            crate::losses::Likelihood::Laplace => (v / 2.0).sqrt(),
        })
        .collect())
}
