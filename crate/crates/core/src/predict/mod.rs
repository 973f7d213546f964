//! Monte Carlo dropout inference and uncertainty decomposition.

mod dump;

pub use dump::{
    classification_records, is_regression_header, read_classification_dump, read_regression_dump, regression_records,
    write_classification_dump, write_regression_dump, ClassificationRecord, RegressionRecord,
};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::losses::Likelihood;
use crate::network::{self, DropoutMask, Head, NetworkSpec, Parameters};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;

/// Number of stochastic forward passes used when none is given.
pub const DEFAULT_MC_SAMPLES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// `T` paired outputs of stochastic forward passes over one input batch.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveSamples<T> {
    pub task: Task,
    /// Per-sample predictions (regression) or logits, each `[rows, dim]`.
    pub outputs: Vec<Tensor<T>>,
    /// Regression: per-sample predicted variance `sigma_t^2 > 0`.
    /// Classification: per-sample log noise scale `log sigma_t`.
    pub scales: Option<Vec<Tensor<T>>>,
    pub seed: u64,
}

impl<T: Scalar> PredictiveSamples<T> {
    pub fn regression(outputs: Vec<Tensor<T>>, variances: Option<Vec<Tensor<T>>>, seed: u64) -> Result<Self> {
        let s = PredictiveSamples { task: Task::Regression, outputs, scales: variances, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn classification(logits: Vec<Tensor<T>>, log_sigma: Option<Vec<Tensor<T>>>, seed: u64) -> Result<Self> {
        let s = PredictiveSamples { task: Task::Classification, outputs: logits, scales: log_sigma, seed };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let first = self.outputs.first().ok_or_else(|| Error::invalid("predictive samples: T must be at least 1"))?;
        if first.ndim() != 2 {
            return Err(Error::shape("predictive samples", format!("{:?} is not [rows, dim]", first.shape())));
        }
        let shape = first.shape();
        let bad = |t: &Tensor<T>| t.shape() != shape;
        if self.outputs.iter().any(bad) {
            return Err(Error::shape("predictive samples", "sample shapes differ"));
        }
        if let Some(sc) = &self.scales {
            if sc.len() != self.outputs.len() || sc.iter().any(bad) {
                return Err(Error::shape("predictive samples", "scale shapes differ from outputs"));
            }
            if self.task == Task::Regression && sc.iter().flat_map(|t| t.data()).any(|&v| !(v > T::zero())) {
                return Err(Error::invalid("predictive samples: variances must be positive"));
            }
        }
        Ok(())
    }

    /// Sample count `T`.
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.outputs[0].shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.outputs[0].shape()[1]
    }
}

fn task_of(spec: &NetworkSpec) -> Task {
    if spec.head.is_classification() {
        Task::Classification
    } else {
        Task::Regression
    }
}

fn to_scale<T: Scalar>(spec: &NetworkSpec, s: Tensor<T>) -> Tensor<T> {
    match task_of(spec) {
        Task::Regression => {
            let lik: Likelihood = spec.likelihood;
            s.map(|v| lik.variance(v))
        }
        Task::Classification => s,
    }
}

fn collect<T: Scalar>(
    spec: &NetworkSpec,
    outs: Vec<network::HeadOutput<T>>,
    seed: u64,
) -> Result<PredictiveSamples<T>> {
    let hetero = spec.head.is_hetero();
    let mut outputs = Vec::with_capacity(outs.len());
    let mut scales = Vec::with_capacity(outs.len());
    for o in outs {
        outputs.push(o.mean);
        if let Some(s) = o.log_scale {
            scales.push(to_scale(spec, s));
        }
    }
    let scales = hetero.then_some(scales);
    match task_of(spec) {
        Task::Regression => PredictiveSamples::regression(outputs, scales, seed),
        Task::Classification => PredictiveSamples::classification(outputs, scales, seed),
    }
}

/// `T` stochastic forward passes, each with its own batch-shared dropout mask
/// drawn from `(seed, t)`. Samples run in parallel; the result does not depend
/// on scheduling.
pub fn mc_dropout_predict<T: Scalar>(
    params: &Parameters<T>,
    spec: &NetworkSpec,
    x: &Tensor<T>,
    samples: usize,
    seed: u64,
) -> Result<PredictiveSamples<T>> {
    if samples == 0 {
        return Err(Error::invalid("mc_dropout_predict: T must be at least 1"));
    }
    let outs = (0..samples as u64)
        .into_par_iter()
        .map(|t| {
            let mask = DropoutMask::mc_sample(spec, seed, t);
            network::forward(params, spec, x, Some(&mask))
        })
        .collect::<Result<Vec<_>>>()?;
    collect(spec, outs, seed)
}

/// Deterministic MAP pass wrapped as a single sample.
pub fn map_predict<T: Scalar>(
    params: &Parameters<T>,
    spec: &NetworkSpec,
    x: &Tensor<T>,
) -> Result<PredictiveSamples<T>> {
    let out = network::forward(params, spec, x, None)?;
    collect(spec, vec![out], 0)
}

/// Regression predictive moments, per output element.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDecomposition<T> {
    pub predictive_mean: Tensor<T>,
    /// Population variance of the sampled predictions.
    pub epistemic_var: Tensor<T>,
    /// Mean of the sampled predicted variances (zero without a variance head).
    pub aleatoric_var: Tensor<T>,
    /// `epistemic_var + aleatoric_var`.
    pub total_var: Tensor<T>,
}

pub fn decompose_regression<T: Scalar>(samples: &PredictiveSamples<T>) -> Result<RegressionDecomposition<T>> {
    if samples.task != Task::Regression {
        return Err(Error::invalid("decompose_regression: classification samples"));
    }
    let t = T::of(samples.len() as f64);
    let shape = samples.outputs[0].shape().to_vec();
    let numel = samples.outputs[0].numel();
    // Moments of deviations from the first sample: the variance is exactly
    // zero when all samples agree.
    let base = samples.outputs[0].data();
    let mut shift = vec![T::zero(); numel];
    for s in &samples.outputs {
        for ((m, &v), &b) in shift.iter_mut().zip(s.data()).zip(base) {
            *m = *m + (v - b);
        }
    }
    shift.iter_mut().for_each(|m| *m = *m / t);
    let mut epi = vec![T::zero(); numel];
    for s in &samples.outputs {
        for (((e, &v), &b), &m) in epi.iter_mut().zip(s.data()).zip(base).zip(&shift) {
            let d = (v - b) - m;
            *e = *e + d * d;
        }
    }
    epi.iter_mut().for_each(|e| *e = *e / t);
    let mean: Vec<T> = base.iter().zip(&shift).map(|(&b, &m)| b + m).collect();
    let mut alea = vec![T::zero(); numel];
    if let Some(vars) = &samples.scales {
        for s in vars {
            alea.iter_mut().zip(s.data()).for_each(|(a, &v)| *a = *a + v);
        }
        alea.iter_mut().for_each(|a| *a = *a / t);
    }
    let total: Vec<T> = epi.iter().zip(&alea).map(|(&e, &a)| e + a).collect();
    Ok(RegressionDecomposition {
        predictive_mean: Tensor::new(shape.clone(), mean)?,
        epistemic_var: Tensor::new(shape.clone(), epi)?,
        aleatoric_var: Tensor::new(shape.clone(), alea)?,
        total_var: Tensor::new(shape, total)?,
    })
}

/// Numerically stable softmax of one logit vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Average of the per-sample softmax probabilities, `[rows, C]`.
pub fn mean_softmax<T: Scalar>(samples: &PredictiveSamples<T>) -> Result<Tensor<T>> {
    if samples.task != Task::Classification {
        return Err(Error::invalid("mean_softmax: regression samples"));
    }
    let (rows, c) = (samples.rows(), samples.dim());
    let t = T::of(samples.len() as f64);
    let mut acc = vec![T::zero(); rows * c];
    for s in &samples.outputs {
        for i in 0..rows {
            let p = softmax(s.row(i));
            acc[i * c..(i + 1) * c].iter_mut().zip(p).for_each(|(a, v)| *a = *a + v);
        }
    }
    acc.iter_mut().for_each(|a| *a = *a / t);
    Tensor::new(vec![rows, c], acc)
}

/// Tolerance on `sum(p) == 1` for [`predictive_entropy`].
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

/// Shannon entropy `-sum p log p` in nats; zero-probability terms contribute 0.
pub fn predictive_entropy<T: Scalar>(p: &[T]) -> Result<T> {
    let sum: T = p.iter().copied().sum();
    if p.is_empty() || p.iter().any(|&v| !(v >= T::zero())) || (sum - T::one()).abs() > T::of(PROBABILITY_SUM_TOL) {
        return Err(Error::invalid(format!("not a probability vector (sum {sum})")));
    }
    Ok(-p.iter().filter(|&&v| v > T::zero()).map(|&v| v * v.ln()).sum::<T>())
}

/// Per-row logit variance across samples, averaged over classes.
pub fn epistemic_logit_variance<T: Scalar>(samples: &PredictiveSamples<T>) -> Result<Vec<T>> {
    if samples.task != Task::Classification {
        return Err(Error::invalid("epistemic_logit_variance: regression samples"));
    }
    if samples.len() < 2 {
        return Err(Error::invalid("epistemic_logit_variance: needs T >= 2"));
    }
    let as_regression = PredictiveSamples {
        task: Task::Regression,
        outputs: samples.outputs.clone(),
        scales: None,
        seed: samples.seed,
    };
    let var = decompose_regression(&as_regression)?.epistemic_var;
    let c = T::of(samples.dim() as f64);
    Ok((0..samples.rows()).map(|i| var.row(i).iter().copied().sum::<T>() / c).collect())
}

/// Entropy of the logit-noise marginal at MAP weights, per row.
///
/// Each row averages `softmax(f + sigma * eps_k)` over `noise_samples` draws
/// from its own `(seed, row)` stream.
pub fn aleatoric_classification_entropy<T: Scalar>(
    params: &Parameters<T>,
    spec: &NetworkSpec,
    x: &Tensor<T>,
    noise_samples: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if spec.head != Head::ClassificationHetero {
        return Err(Error::invalid("aleatoric_classification_entropy needs a heteroscedastic classification head"));
    }
    if noise_samples == 0 {
        return Err(Error::invalid("aleatoric_classification_entropy: T must be at least 1"));
    }
    let out = network::forward(params, spec, x, None)?;
    let log_sigma = out.log_scale.expect("hetero head");
    (0..out.mean.rows())
        .map(|i| noisy_softmax_entropy(out.mean.row(i), log_sigma.row(i), noise_samples, seed, i as u64))
        .collect()
}

/// Entropy of `E[softmax(f + exp(s) eps)]` estimated with `samples` draws.
pub fn noisy_softmax_entropy<T: Scalar>(f: &[T], log_sigma: &[T], samples: usize, seed: u64, stream: u64) -> Result<T> {
    let mut r = rng::stream(seed, Domain::AleatoricNoise, stream);
    let c = f.len();
    let sigma: Vec<T> = log_sigma.iter().map(|s| s.exp()).collect();
    let mut acc = vec![T::zero(); c];
    let mut x = vec![T::zero(); c];
    for _ in 0..samples {
        for k in 0..c {
            let z: f64 = StandardNormal.sample(&mut r);
            x[k] = f[k] + sigma[k] * T::of(z);
        }
        acc.iter_mut().zip(softmax(&x)).for_each(|(a, p)| *a = *a + p);
    }
    let t = T::of(samples as f64);
    let p: Vec<T> = acc.into_iter().map(|a| a / t).collect();
    predictive_entropy(&p)
}

/// Classification predictive summary, per row.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationDecomposition<T> {
    pub mean_probs: Tensor<T>,
    pub predictive_entropy: Vec<T>,
    pub aleatoric_entropy: Option<Vec<T>>,
    pub epistemic_logit_var: Option<Vec<T>>,
}

pub fn decompose_classification<T: Scalar>(
    samples: &PredictiveSamples<T>,
    aleatoric_entropy: Option<Vec<T>>,
) -> Result<ClassificationDecomposition<T>> {
    let mean_probs = mean_softmax(samples)?;
    let predictive_entropy =
        (0..mean_probs.rows()).map(|i| predictive_entropy(mean_probs.row(i))).collect::<Result<Vec<_>>>()?;
    let epistemic_logit_var = if samples.len() >= 2 { Some(epistemic_logit_variance(samples)?) } else { None };
    if let Some(a) = &aleatoric_entropy {
        if a.len() != mean_probs.rows() {
            return Err(Error::shape("decompose_classification", "aleatoric entropy length"));
        }
    }
    Ok(ClassificationDecomposition { mean_probs, predictive_entropy, aleatoric_entropy, epistemic_logit_var })
}

/// Index of the largest entry.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
