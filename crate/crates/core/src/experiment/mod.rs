//! Declarative experiment runs: data, training, inference, evaluation and
//! artifact files.
//!
//! A run writes into `output_dir/name/`: `config.json` (the resolved
//! config), `metrics.csv`, `train_loss.csv`, per test set
//! `predictions_<set>.csv`, `calibration_<set>.{csv,svg}` and
//! `pr_<set>.{csv,svg}`, and `timings.json`. Every file except
//! `config.json` carries the SHA-256 of `config.json` as
//! `config_hash: <hex>` in a comment. Only `timings.json` varies between
//! identical runs.

mod config;
mod plot;
mod run;
mod table;

pub use config::{
    DataSection, EvaluationSection, ExperimentConfig, Generator, InferenceSection, TaskKind, TrainingSection, Variant,
};
pub use plot::{emit_plot, render_svg};
pub use run::{
    columns, execute, predicted_sigma, prepare_data, run_experiment, self_check, write_artifacts, Evaluation,
    Prediction, RunArtifact, RunData, RunOutput, Timings, CLASSIFICATION_COLUMNS, IN_DIST, OOD, REGRESSION_COLUMNS,
};
pub use table::{emit_table, render_table, sig6, Cell, MetricsRow};
