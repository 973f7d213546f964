//! Synthetic tasks with known noise.
//!
//! Dataset CSV layout: header `x0,..,x{d-1},y[,sigma_true][,corrupted]`.
//! Regression `y` is a float; classification `y` is an integer label and
//! `sigma_true` holds the label-flip probability. `corrupted` is `0` or `1`.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::rng::{self, Domain};
use crate::train::Targets;

#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Regression(Vec<f64>),
    Classification { labels: Vec<usize>, classes: usize },
}

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[n, d]`.
    pub inputs: Tensor<f64>,
    pub targets: Labels,
    /// True noise per row: `sigma*(x)` for regression (positive), flip
    /// probability `rho(x)` for classification.
    pub ground_truth_noise: Option<Vec<f64>>,
    /// Rows altered by [`corrupt_labels`].
    pub corrupted: Option<Vec<bool>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.last_dim()
    }

    pub fn classes(&self) -> Option<usize> {
        match &self.targets {
            Labels::Classification { classes, .. } => Some(*classes),
            Labels::Regression(_) => None,
        }
    }

    pub fn regression_targets(&self) -> Option<&[f64]> {
        match &self.targets {
            Labels::Regression(y) => Some(y),
            Labels::Classification { .. } => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Labels::Classification { labels, .. } => Some(labels),
            Labels::Regression(_) => None,
        }
    }

    /// Training targets in the network's scalar type.
    pub fn train_targets(&self) -> Targets<f64> {
        match &self.targets {
            Labels::Regression(y) => Targets::Regression(Tensor::matrix(y.len(), 1, y.clone()).expect("targets")),
            Labels::Classification { labels, .. } => Targets::Classification(labels.clone()),
        }
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            inputs: self.inputs.select_rows(idx),
            targets: match &self.targets {
                Labels::Regression(y) => Labels::Regression(pick(y)),
                Labels::Classification { labels, classes } => {
                    Labels::Classification { labels: idx.iter().map(|&i| labels[i]).collect(), classes: *classes }
                }
            },
            ground_truth_noise: self.ground_truth_noise.as_ref().map(pick),
            corrupted: self.corrupted.as_ref().map(|c| idx.iter().map(|&i| c[i]).collect()),
            provenance: self.provenance.clone(),
        }
    }
}

/// `y = sin(2 pi freq * m(x)) + (base + slope |m(x)|) * eps`, where `m(x)` is
/// the mean of the input coordinates and `x ~ U[x_low, x_high]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub dim: usize,
    pub x_low: f64,
    pub x_high: f64,
    pub freq: f64,
    pub noise_base: f64,
    pub noise_slope: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig { dim: 1, x_low: -1.0, x_high: 1.0, freq: 1.0, noise_base: 0.05, noise_slope: 0.45 }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("data.dim", "must be positive"));
        }
        if !(self.x_low < self.x_high) || !self.x_low.is_finite() || !self.x_high.is_finite() {
            return Err(Error::config("data.x_low", "need finite x_low < x_high"));
        }
        if !(self.noise_base >= 0.0 && self.noise_slope >= 0.0) {
            return Err(Error::config("data.noise_base", "noise parameters must be non-negative"));
        }
        if self.noise_base == 0.0 && self.noise_slope > 0.0 {
            return Err(Error::config("data.noise_base", "must be positive when noise_slope is"));
        }
        Ok(())
    }

    fn centre(x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / x.len() as f64
    }

    pub fn mean_fn(&self, x: &[f64]) -> f64 {
        (2.0 * PI * self.freq * Self::centre(x)).sin()
    }

    pub fn sigma_fn(&self, x: &[f64]) -> f64 {
        self.noise_base + self.noise_slope * Self::centre(x).abs()
    }

    fn noiseless(&self) -> bool {
        self.noise_base == 0.0 && self.noise_slope == 0.0
    }
}

fn regression_from_inputs(
    config: &RegressionConfig,
    xs: Vec<f64>,
    seed: u64,
    generator: &str,
    stream: u64,
) -> Result<Dataset> {
    let d = config.dim;
    let n = xs.len() / d;
    let mut r = rng::stream(seed, Domain::Data, stream);
    let mut ys = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    for row in xs.chunks(d) {
        let sigma = config.sigma_fn(row);
        let eps: f64 = StandardNormal.sample(&mut r);
        ys.push(config.mean_fn(row) + sigma * eps);
        sigmas.push(sigma);
    }
    Ok(Dataset {
        inputs: Tensor::matrix(n, d, xs)?,
        targets: Labels::Regression(ys),
        ground_truth_noise: (!config.noiseless()).then_some(sigmas),
        corrupted: None,
        provenance: Provenance { generator: generator.into(), seed, params: serde_json::to_string(config)? },
    })
}

pub fn gen_hetero_regression(n: usize, seed: u64, config: &RegressionConfig) -> Result<Dataset> {
    config.validate()?;
    if n == 0 {
        return Err(Error::invalid("gen_hetero_regression: n must be at least 1"));
    }
    let mut r = rng::stream(seed, Domain::Data, 0);
    let xs: Vec<f64> = (0..n * config.dim).map(|_| r.random_range(config.x_low..config.x_high)).collect();
    regression_from_inputs(config, xs, seed, "hetero_regression", 1)
}

/// Gaussian clusters in 2-D with input-dependent label flips.
///
/// Cluster `k` is centred at `radius (cos 2 pi k / C, sin 2 pi k / C)` plus
/// `offset`, with isotropic standard deviation `cluster_std`. A point's label
/// is flipped to a uniformly chosen other class with probability
/// `rho(x) = clamp(flip_base + flip_boundary * (1 - max_k pi_k(x)), 0, 1)`,
/// where `pi(x)` is the clean class posterior: flips concentrate where the
/// clusters overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    pub classes: usize,
    pub radius: f64,
    pub cluster_std: f64,
    pub offset: [f64; 2],
    pub flip_base: f64,
    pub flip_boundary: f64,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        ClassificationConfig {
            classes: 4,
            radius: 2.0,
            cluster_std: 0.6,
            offset: [0.0, 0.0],
            flip_base: 0.0,
            flip_boundary: 0.6,
        }
    }
}

impl ClassificationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("data.classes", "need at least 2 classes"));
        }
        if !(self.radius >= 0.0) || !(self.cluster_std > 0.0) {
            return Err(Error::config("data.cluster_std", "need radius >= 0 and cluster_std > 0"));
        }
        if !(0.0..=1.0).contains(&self.flip_base) || !(self.flip_boundary >= 0.0) {
            return Err(Error::config("data.flip_base", "flip probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn means(&self) -> Vec<[f64; 2]> {
        let c = self.classes as f64;
        (0..self.classes)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / c;
                [self.offset[0] + self.radius * a.cos(), self.offset[1] + self.radius * a.sin()]
            })
            .collect()
    }

    /// Clean class posterior at `x` (equal priors).
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let s2 = self.cluster_std * self.cluster_std;
        let logits: Vec<f64> =
            self.means().iter().map(|m| -((x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2)) / (2.0 * s2)).collect();
        crate::predict::softmax(&logits)
    }

    pub fn flip_prob(&self, x: &[f64]) -> f64 {
        let top = self.posterior(x).into_iter().fold(0.0, f64::max);
        (self.flip_base + self.flip_boundary * (1.0 - top)).clamp(0.0, 1.0)
    }

    /// Accuracy of the clean Bayes classifier under the flip noise, at `x`.
    pub fn bayes_accuracy_at(&self, x: &[f64]) -> f64 {
        let pi = self.posterior(x);
        let rho = self.flip_prob(x);
        let c = self.classes as f64;
        pi.iter().map(|&p| (1.0 - rho) * p + rho * (1.0 - p) / (c - 1.0)).fold(0.0, f64::max)
    }
}

pub fn gen_toy_classification(n: usize, seed: u64, config: &ClassificationConfig) -> Result<Dataset> {
    config.validate()?;
    if n < config.classes {
        return Err(Error::invalid(format!("gen_toy_classification: n = {n} < C = {}", config.classes)));
    }
    let means = config.means();
    let mut r = rng::stream(seed, Domain::Data, 0);
    let mut xs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut rhos = Vec::with_capacity(n);
    for i in 0..n {
        // balanced classes
        let k = i % config.classes;
        let z0: f64 = StandardNormal.sample(&mut r);
        let z1: f64 = StandardNormal.sample(&mut r);
        let x = [means[k][0] + config.cluster_std * z0, means[k][1] + config.cluster_std * z1];
        let rho = config.flip_prob(&x);
        let label = if r.random::<f64>() < rho { other_class(&mut r, k, config.classes) } else { k };
        xs.extend_from_slice(&x);
        labels.push(label);
        rhos.push(rho);
    }
    Ok(Dataset {
        inputs: Tensor::matrix(n, 2, xs)?,
        targets: Labels::Classification { labels, classes: config.classes },
        ground_truth_noise: Some(rhos),
        corrupted: None,
        provenance: Provenance { generator: "toy_classification".into(), seed, params: serde_json::to_string(config)? },
    })
}

fn other_class<R: Rng>(r: &mut R, k: usize, classes: usize) -> usize {
    let j = r.random_range(0..classes - 1);
    if j >= k {
        j + 1
    } else {
        j
    }
}

/// Replaces exactly `round(fraction * n)` rows: regression targets by
/// uniform draws over the observed target range, labels by a uniformly
/// chosen different class. Returns a new dataset with the rows flagged.
pub fn corrupt_labels(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("corrupt_labels: fraction {fraction} not in [0, 1]")));
    }
    let n = ds.len();
    let k = (fraction * n as f64).round() as usize;
    let mut r = rng::stream(seed, Domain::Corrupt, 0);
    let chosen = index::sample(&mut r, n, k).into_vec();
    let mut out = ds.clone();
    let mut flags = ds.corrupted.clone().unwrap_or_else(|| vec![false; n]);
    match &mut out.targets {
        Labels::Regression(y) => {
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for &i in &chosen {
                y[i] = if hi > lo { r.random_range(lo..hi) } else { lo };
            }
        }
        Labels::Classification { labels, classes } => {
            for &i in &chosen {
                labels[i] = other_class(&mut r, labels[i], *classes);
            }
        }
    }
    for &i in &chosen {
        flags[i] = true;
    }
    out.corrupted = Some(flags);
    Ok(out)
}

/// Uniform sample without replacement of `round(fraction * n)` rows, kept in
/// original order. Subsets drawn with the same seed are nested.
pub fn subset(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("subset: fraction {fraction} not in (0, 1]")));
    }
    let n = ds.len();
    let k = (fraction * n as f64).round() as usize;
    if k == 0 {
        return Err(Error::invalid("subset: empty result"));
    }
    let mut r = rng::stream(seed, Domain::Subset, 0);
    // a full permutation, so every fraction takes a prefix of the same order
    let mut idx = index::sample(&mut r, n, n).into_vec();
    idx.truncate(k);
    idx.sort_unstable();
    Ok(ds.select(&idx))
}

/// Generator settings for an out-of-distribution test set.
#[derive(Clone, Debug, PartialEq)]
pub enum DataConfig {
    Regression(RegressionConfig),
    Classification(ClassificationConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OodDataset {
    pub dataset: Dataset,
    /// Set when the shifted inputs may overlap the training support.
    pub overlaps_training_support: bool,
}

/// Fresh data from the same ground-truth process, moved off the training
/// support: regression inputs are drawn from `U[x_high + shift, x_high +
/// shift + 1]^d`; classification clusters are translated by `shift` along
/// the first axis.
pub fn ood_shift(config: &DataConfig, n: usize, seed: u64, shift: f64) -> Result<OodDataset> {
    if !(shift > 0.0) || !shift.is_finite() {
        return Err(Error::invalid(format!("ood_shift: shift must be positive, got {shift}")));
    }
    match config {
        DataConfig::Regression(c) => {
            c.validate()?;
            let lo = c.x_high + shift;
            let mut r = rng::stream(seed, Domain::Data, 2);
            let xs: Vec<f64> = (0..n * c.dim).map(|_| r.random_range(lo..lo + 1.0)).collect();
            let mut ds = regression_from_inputs(c, xs, seed, "hetero_regression_ood", 3)?;
            ds.provenance.params = format!("{{\"base\":{},\"shift\":{shift}}}", ds.provenance.params);
            Ok(OodDataset { dataset: ds, overlaps_training_support: false })
        }
        DataConfig::Classification(c) => {
            let moved = ClassificationConfig { offset: [c.offset[0] + shift, c.offset[1]], ..c.clone() };
            let mut ds = gen_toy_classification(n, seed, &moved)?;
            ds.provenance.generator = "toy_classification_ood".into();
            // training support: the bounding box of the clusters +- 3 std
            let reach = c.radius + 3.0 * c.cluster_std;
            let overlaps = moved
                .means()
                .iter()
                .any(|m| (m[0] - c.offset[0]).abs() <= reach && (m[1] - c.offset[1]).abs() <= reach);
            Ok(OodDataset { dataset: ds, overlaps_training_support: overlaps })
        }
    }
}

pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let d = ds.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if ds.ground_truth_noise.is_some() {
        header.push("sigma_true".into());
    }
    if ds.corrupted.is_some() {
        header.push("corrupted".into());
    }
    let rows: Vec<Vec<String>> = (0..ds.len())
        .map(|i| {
            let mut row: Vec<String> = ds.inputs.row(i).iter().map(|v| v.to_string()).collect();
            row.push(match &ds.targets {
                Labels::Regression(y) => y[i].to_string(),
                Labels::Classification { labels, .. } => labels[i].to_string(),
            });
            if let Some(s) = &ds.ground_truth_noise {
                row.push(s[i].to_string());
            }
            if let Some(c) = &ds.corrupted {
                row.push(u8::from(c[i]).to_string());
            }
            row
        })
        .collect();
    let comments = vec![format!("provenance: {}", serde_json::to_string(&ds.provenance)?)];
    fsutil::write_atomic(path, &fsutil::csv_bytes(&comments, Some(&header), &rows)?)
}

/// Reads a dataset file. `classes` selects classification and gives `C`.
pub fn read_csv(path: &Path, classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = fsutil::csv_reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let d = header.iter().take_while(|h| h.starts_with('x')).count();
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if d == 0 || header.get(d).map(String::as_str) != Some("y") || (0..d).any(|j| header[j] != format!("x{j}")) {
        return Err(bad("header must start with x0..x{d-1},y"));
    }
    let sigma_col = header.iter().position(|h| h == "sigma_true");
    let corrupt_col = header.iter().position(|h| h == "corrupted");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sig = Vec::new();
    let mut cor = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(&format!("`{}`: {e}", &rec[i])));
        for j in 0..d {
            xs.push(num(j)?);
        }
        ys.push(num(d)?);
        if let Some(c) = sigma_col {
            sig.push(num(c)?);
        }
        if let Some(c) = corrupt_col {
            cor.push(&rec[c] == "1");
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(bad("no rows"));
    }
    let targets = match classes {
        Some(c) => {
            let labels = ys
                .iter()
                .map(|&y| {
                    if y >= 0.0 && y.fract() == 0.0 && (y as usize) < c {
                        Ok(y as usize)
                    } else {
                        Err(bad("bad label"))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Labels::Classification { labels, classes: c }
        }
        None => Labels::Regression(ys),
    };
    Ok(Dataset {
        inputs: Tensor::matrix(n, d, xs)?,
        targets,
        ground_truth_noise: sigma_col.map(|_| sig),
        corrupted: corrupt_col.map(|_| cor),
        provenance: Provenance { generator: "file".into(), seed: 0, params: path.display().to_string() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_regression_is_exact() {
        let c = RegressionConfig { noise_base: 0.0, noise_slope: 0.0, ..Default::default() };
        let ds = gen_hetero_regression(200, 4, &c).unwrap();
        let y = ds.regression_targets().unwrap();
        for i in 0..200 {
            assert_eq!(y[i], c.mean_fn(ds.inputs.row(i)));
        }
        assert!(ds.ground_truth_noise.is_none());
    }

    #[test]
    fn generators_are_deterministic() {
        let c = RegressionConfig::default();
        assert_eq!(gen_hetero_regression(50, 1, &c).unwrap(), gen_hetero_regression(50, 1, &c).unwrap());
        assert_ne!(gen_hetero_regression(50, 1, &c).unwrap(), gen_hetero_regression(50, 2, &c).unwrap());
        let k = ClassificationConfig::default();
        assert_eq!(gen_toy_classification(50, 1, &k).unwrap(), gen_toy_classification(50, 1, &k).unwrap());
    }

    #[test]
    fn residual_scale_near_origin() {
        let c = RegressionConfig::default();
        let ds = gen_hetero_regression(100_000, 7, &c).unwrap();
        let y = ds.regression_targets().unwrap();
        let r: Vec<f64> = (0..ds.len())
            .filter(|&i| ds.inputs.row(i)[0].abs() < 0.02)
            .map(|i| y[i] - c.mean_fn(ds.inputs.row(i)))
            .collect();
        let std = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
        assert!((std / 0.05 - 1.0).abs() < 0.2, "std {std} over {} points", r.len());
    }

    #[test]
    fn corruption_counts_and_flags() {
        let k = ClassificationConfig { classes: 2, ..Default::default() };
        let ds = gen_toy_classification(1000, 3, &k).unwrap();
        assert_eq!(corrupt_labels(&ds, 0.0, 1).unwrap().targets, ds.targets);
        let all = corrupt_labels(&ds, 1.0, 1).unwrap();
        assert!(all.labels().unwrap().iter().zip(ds.labels().unwrap()).all(|(a, b)| a != b));
        let part = corrupt_labels(&ds, 0.2, 1).unwrap();
        assert_eq!(part.corrupted.as_ref().unwrap().iter().filter(|&&c| c).count(), 200);
        assert!(ds.corrupted.is_none(), "source untouched");
        assert!(corrupt_labels(&ds, 1.5, 1).is_err());
    }

    #[test]
    fn subsets_are_nested_and_sized() {
        let ds = gen_hetero_regression(100, 3, &RegressionConfig::default()).unwrap();
        assert_eq!(subset(&ds, 1.0, 5).unwrap(), ds);
        let half = subset(&ds, 0.5, 5).unwrap();
        let quarter = subset(&ds, 0.25, 5).unwrap();
        assert_eq!((half.len(), quarter.len()), (50, 25));
        let rows = |d: &Dataset| (0..d.len()).map(|i| d.inputs.row(i)[0].to_bits()).collect::<Vec<_>>();
        let h = rows(&half);
        assert!(rows(&quarter).iter().all(|q| h.contains(q)));
        assert!(subset(&ds, 0.0, 5).is_err());
        assert!(subset(&ds, 0.001, 5).is_err());
    }

    #[test]
    fn ood_regression_is_off_support() {
        let c = DataConfig::Regression(RegressionConfig::default());
        assert!(ood_shift(&c, 10, 0, 0.0).is_err());
        let ood = ood_shift(&c, 500, 0, 1.0).unwrap();
        assert!(!ood.overlaps_training_support);
        assert!(ood.dataset.inputs.data().iter().all(|&x| x >= 2.0 && x <= 3.0));
    }

    #[test]
    fn small_classification_shift_is_flagged() {
        let c = DataConfig::Classification(ClassificationConfig::default());
        assert!(ood_shift(&c, 40, 0, 0.5).unwrap().overlaps_training_support);
        assert!(!ood_shift(&c, 40, 0, 12.0).unwrap().overlaps_training_support);
    }

    #[test]
    fn half_flip_binary_bayes_rate() {
        let k = ClassificationConfig { classes: 2, flip_base: 0.5, flip_boundary: 0.0, ..Default::default() };
        for x in [[0.0, 0.0], [2.0, 0.0], [-1.0, 0.3]] {
            assert!(k.bayes_accuracy_at(&x) <= 0.75 + 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let ds = corrupt_labels(&gen_hetero_regression(20, 1, &RegressionConfig::default()).unwrap(), 0.25, 2).unwrap();
        write_csv(&p, &ds).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().nth(1).unwrap() == "x0,y,sigma_true,corrupted");
        let back = read_csv(&p, None).unwrap();
        assert_eq!(
            (back.inputs, back.targets, back.ground_truth_noise, back.corrupted),
            (ds.inputs, ds.targets, ds.ground_truth_noise, ds.corrupted)
        );
    }
}
