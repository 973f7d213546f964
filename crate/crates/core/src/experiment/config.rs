use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{default_levels, default_percentiles, DEFAULT_BINS};
use crate::network::{Head, NetworkSpec};
use crate::predict::DEFAULT_MC_SAMPLES;
use crate::synthdata::{ClassificationConfig, DataConfig, RegressionConfig};
use crate::train::{Objective, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// Which uncertainty the model captures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Fixed-noise loss, single deterministic pass.
    Baseline,
    /// Learned-noise loss, single deterministic pass.
    Aleatoric,
    /// Fixed-noise loss, MC dropout.
    Epistemic,
    /// Learned-noise loss, MC dropout.
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Aleatoric, Variant::Epistemic, Variant::Combined];

    pub fn learns_noise(self) -> bool {
        matches!(self, Variant::Aleatoric | Variant::Combined)
    }

    pub fn samples_weights(self) -> bool {
        matches!(self, Variant::Epistemic | Variant::Combined)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Aleatoric => "aleatoric",
            Variant::Epistemic => "epistemic",
            Variant::Combined => "combined",
        }
    }

    /// Output head matching this variant.
    pub fn head(self, task: TaskKind) -> Head {
        match (task, self.learns_noise()) {
            (TaskKind::Regression, true) => Head::RegressionHetero,
            (TaskKind::Regression, false) => Head::RegressionPlain,
            (TaskKind::Classification, true) => Head::ClassificationHetero,
            (TaskKind::Classification, false) => Head::ClassificationPlain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    HeteroRegression(RegressionConfig),
    ToyClassification(ClassificationConfig),
}

impl Generator {
    pub fn task(&self) -> TaskKind {
        match self {
            Generator::HeteroRegression(_) => TaskKind::Regression,
            Generator::ToyClassification(_) => TaskKind::Classification,
        }
    }

    pub fn data_config(&self) -> DataConfig {
        match self {
            Generator::HeteroRegression(c) => DataConfig::Regression(c.clone()),
            Generator::ToyClassification(c) => DataConfig::Classification(c.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub generator: Generator,
    pub n_train: usize,
    pub n_test: usize,
    /// Seeds generation, corruption and subsetting (each on its own stream).
    pub seed: u64,
    #[serde(default)]
    pub corruption: f64,
    #[serde(default = "one")]
    pub subset: f64,
    /// Also evaluate on a shifted test set of `n_test` points.
    #[serde(default)]
    pub ood: bool,
    #[serde(default = "one")]
    pub ood_shift: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub seed: u64,
    /// Logit-noise draws per step for learned-noise classification.
    #[serde(default = "default_logit_samples")]
    pub logit_samples: usize,
    /// Noise scale of the fixed-noise regression loss.
    #[serde(default = "one")]
    pub fixed_sigma: f64,
}

fn default_lr() -> f64 {
    crate::optim::RmsProp::<f64>::DEFAULT_LR
}

fn default_weight_decay() -> f64 {
    crate::optim::RmsProp::<f64>::DEFAULT_WEIGHT_DECAY
}

fn default_logit_samples() -> usize {
    10
}

impl TrainingSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: u64,
    /// Logit-noise draws per point for the aleatoric entropy.
    #[serde(default = "default_noise_samples")]
    pub noise_samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

fn default_noise_samples() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { bins: DEFAULT_BINS, percentiles: default_percentiles(), levels: default_levels() }
    }
}

/// One experiment run, read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskKind,
    pub variant: Variant,
    pub network: NetworkSpec,
    pub training: TrainingSection,
    pub data: DataSection,
    pub inference: InferenceSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty file-name-safe string"));
        }
        self.network.validate()?;
        self.training.train_config().validate()?;
        let task = self.data.generator.task();
        if task != self.task {
            return Err(Error::config(
                "data.generator",
                format!("generates {task:?} data but task is {:?}", self.task),
            ));
        }
        let head = self.variant.head(self.task);
        if self.network.head != head {
            return Err(Error::config(
                "network.head",
                format!("variant {} needs head {head:?}, got {:?}", self.variant.name(), self.network.head),
            ));
        }
        if self.variant.samples_weights() && self.network.dropout_p == 0.0 {
            return Err(Error::config("network.dropout_p", "MC dropout variants need dropout_p > 0"));
        }
        match &self.data.generator {
            Generator::HeteroRegression(c) => {
                c.validate()?;
                if self.network.input_dim != c.dim || self.network.output_dim != 1 {
                    return Err(Error::config("network.input_dim", format!("regression data is {} -> 1", c.dim)));
                }
            }
            Generator::ToyClassification(c) => {
                c.validate()?;
                if self.network.input_dim != 2 || self.network.output_dim != c.classes {
                    return Err(Error::config(
                        "network.output_dim",
                        format!("classification data is 2 -> {}", c.classes),
                    ));
                }
            }
        }
        let d = &self.data;
        if d.n_train == 0 || d.n_test == 0 {
            return Err(Error::config("data.n_train", "train and test sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&d.corruption) {
            return Err(Error::config("data.corruption", "must lie in [0, 1]"));
        }
        if !(d.subset > 0.0 && d.subset <= 1.0) || (d.subset * d.n_train as f64).round() < 1.0 {
            return Err(Error::config("data.subset", "must lie in (0, 1] and keep at least one row"));
        }
        if d.ood && !(d.ood_shift > 0.0 && d.ood_shift.is_finite()) {
            return Err(Error::config("data.ood_shift", "must be positive"));
        }
        if self.training.logit_samples == 0 {
            return Err(Error::config("training.logit_samples", "must be at least 1"));
        }
        if !(self.training.fixed_sigma > 0.0) || !self.training.fixed_sigma.is_finite() {
            return Err(Error::config("training.fixed_sigma", "must be positive"));
        }
        if self.inference.samples == 0 || (self.variant.samples_weights() && self.inference.samples < 2) {
            return Err(Error::config("inference.samples", "MC dropout needs at least 2 samples"));
        }
        if self.inference.noise_samples == 0 {
            return Err(Error::config("inference.noise_samples", "must be at least 1"));
        }
        let e = &self.evaluation;
        if e.bins < 2 {
            return Err(Error::config("evaluation.bins", "need at least 2 bins"));
        }
        if e.percentiles.is_empty()
            || e.percentiles.iter().any(|p| !(*p > 0.0 && *p <= 1.0))
            || e.percentiles.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::config("evaluation.percentiles", "must be strictly increasing in (0, 1]"));
        }
        if e.levels.is_empty()
            || e.levels.iter().any(|q| !(*q > 0.0 && *q < 1.0))
            || e.levels.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::config("evaluation.levels", "must be strictly increasing in (0, 1)"));
        }
        Ok(())
    }

    /// Training objective implied by the task and variant.
    pub fn objective(&self) -> Objective {
        match (self.task, self.variant.learns_noise()) {
            (TaskKind::Regression, true) => Objective::Hetero { likelihood: self.network.likelihood },
            (TaskKind::Regression, false) => Objective::FixedSigma { sigma: self.training.fixed_sigma },
            (TaskKind::Classification, true) => Objective::StochasticSoftmax { samples: self.training.logit_samples },
            (TaskKind::Classification, false) => Objective::SoftmaxXent,
        }
    }

    /// The config with every default filled in, as written to `config.json`.
    pub fn resolved_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Hex SHA-256 of [`resolved_json`](Self::resolved_json).
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.resolved_json()?.as_bytes())))
    }
}

/// Best-effort field path for a deserialisation error.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            return rest.split('`').next().unwrap_or("config").to_string();
        }
    }
    "config".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_json() -> String {
        r#"{
            "name": "t",
            "task": "regression",
            "variant": "combined",
            "network": {"input_dim": 1, "hidden": [8], "output_dim": 1, "dropout_p": 0.1, "head": "regression_hetero"},
            "training": {"epochs": 2, "batch_size": 16, "seed": 1},
            "data": {"generator": {"hetero_regression": {}}, "n_train": 40, "n_test": 20, "seed": 2},
            "inference": {"samples": 5, "seed": 3},
            "output_dir": "out"
        }"#
        .to_string()
    }

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_json(&sample_json()).unwrap();
        assert_eq!(c.evaluation.bins, 10);
        assert_eq!(c.training.lr, 1e-3);
        assert_eq!(c.data.subset, 1.0);
        let again = ExperimentConfig::from_json(&c.resolved_json().unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn errors_name_the_field() {
        let bad = sample_json().replace("\"seed\": 3", "\"seed\": 3, \"tempo\": 1");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "tempo"),
            other => panic!("{other:?}"),
        }
        let bad = sample_json().replace("regression_hetero", "regression_plain");
        assert!(
            matches!(ExperimentConfig::from_json(&bad), Err(Error::Config { field, .. }) if field == "network.head")
        );
        let bad = sample_json().replace("\"dropout_p\": 0.1", "\"dropout_p\": 0.0");
        assert!(
            matches!(ExperimentConfig::from_json(&bad), Err(Error::Config { field, .. }) if field == "network.dropout_p")
        );
    }
}
