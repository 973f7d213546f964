//! Training objectives.
//!
//! Every loss is recorded on a [`Graph`] so it can be differentiated; the
//! [`values`] module wraps them for plain tensor evaluation. Batch reduction is
//! always the mean over points (and over output elements).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::network::{weight_decay_term, Parameters};
use crate::scalar::Scalar;

/// Observation-noise family for regression.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// `s = log sigma^2`.
    #[default]
    Gaussian,
    /// `s = log b` for scale `b`; variance `2 b^2`.
    Laplace,
}

impl Likelihood {
    /// Predictive variance implied by a log-scale output.
    pub fn variance<T: Scalar>(self, s: T) -> T {
        match self {
            Likelihood::Gaussian => s.exp(),
            Likelihood::Laplace => T::of(2.0) * (T::of(2.0) * s).exp(),
        }
    }
}

fn same_shape<T: Scalar>(g: &Graph<T>, op: &'static str, ids: &[NodeId]) -> Result<()> {
    let first = g.shape(ids[0]);
    if ids.iter().any(|&id| g.shape(id) != first) {
        let shapes: Vec<_> = ids.iter().map(|&id| g.shape(id).to_vec()).collect();
        return Err(Error::shape(op, format!("{shapes:?}")));
    }
    Ok(())
}

/// Mean of `0.5 exp(-s) (y - y_hat)^2 + 0.5 s`.
pub fn gaussian_hetero_nll<T: Scalar>(g: &mut Graph<T>, y: NodeId, y_hat: NodeId, s: NodeId) -> Result<NodeId> {
    same_shape(g, "gaussian_hetero_nll", &[y, y_hat, s])?;
    let r = g.sub(y, y_hat)?;
    let r2 = g.square(r)?;
    let neg_s = g.neg(s)?;
    let precision = g.exp(neg_s)?;
    let weighted = g.mul(precision, r2)?;
    let both = g.add(weighted, s)?;
    let half = g.scale(both, T::of(0.5))?;
    g.mean(half)
}

/// Mean of `exp(-s) |y - y_hat| + s` with `s = log b`; the `log 2` constant is
/// dropped.
pub fn laplace_hetero_nll<T: Scalar>(g: &mut Graph<T>, y: NodeId, y_hat: NodeId, s: NodeId) -> Result<NodeId> {
    same_shape(g, "laplace_hetero_nll", &[y, y_hat, s])?;
    let r = g.sub(y, y_hat)?;
    let abs = g.abs(r)?;
    let neg_s = g.neg(s)?;
    let inv_b = g.exp(neg_s)?;
    let weighted = g.mul(inv_b, abs)?;
    let both = g.add(weighted, s)?;
    g.mean(both)
}

/// Heteroscedastic NLL for the given family.
pub fn hetero_nll<T: Scalar>(
    g: &mut Graph<T>,
    likelihood: Likelihood,
    y: NodeId,
    y_hat: NodeId,
    s: NodeId,
) -> Result<NodeId> {
    match likelihood {
        Likelihood::Gaussian => gaussian_hetero_nll(g, y, y_hat, s),
        Likelihood::Laplace => laplace_hetero_nll(g, y, y_hat, s),
    }
}

/// Mean of `(y - y_hat)^2 / (2 sigma^2) + 0.5 log sigma^2` for a fixed noise
/// scale.
pub fn fixed_sigma_nll<T: Scalar>(g: &mut Graph<T>, y: NodeId, y_hat: NodeId, sigma: T) -> Result<NodeId> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::invalid(format!("fixed_sigma_nll: sigma must be positive, got {sigma}")));
    }
    same_shape(g, "fixed_sigma_nll", &[y, y_hat])?;
    let var = sigma * sigma;
    let r = g.sub(y, y_hat)?;
    let r2 = g.square(r)?;
    let m = g.mean(r2)?;
    let scaled = g.scale(m, T::one() / (T::of(2.0) * var))?;
    let c = g.constant(Tensor::scalar(T::of(0.5) * var.ln()));
    g.add(scaled, c)
}

/// One-hot encoding, `[labels.len(), classes]`.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let mut data = vec![T::zero(); labels.len() * classes];
    for (i, &c) in labels.iter().enumerate() {
        data[i * classes + c] = T::one();
    }
    Tensor::new(vec![labels.len(), classes], data)
}

/// Mean over rows of `logsumexp(logits) - logits[label]`. `targets` is a
/// one-hot `[rows, C]` constant.
pub fn softmax_xent<T: Scalar>(g: &mut Graph<T>, logits: NodeId, targets: NodeId) -> Result<NodeId> {
    same_shape(g, "softmax_xent", &[logits, targets])?;
    let lse = g.logsumexp(logits)?;
    let picked_all = g.mul(logits, targets)?;
    let picked = g.sum_last_axis(picked_all)?;
    let nll = g.sub(lse, picked)?;
    g.mean(nll)
}

/// Standard normal logit noise `[samples, rows, classes]` for
/// [`stochastic_softmax_xent`].
pub fn sample_logit_noise<T: Scalar, R: Rng>(
    rng: &mut R,
    samples: usize,
    rows: usize,
    classes: usize,
) -> Result<Tensor<T>> {
    if samples == 0 {
        return Err(Error::invalid("stochastic_softmax_xent: T must be at least 1"));
    }
    let data = (0..samples * rows * classes)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z)
        })
        .collect();
    Tensor::new(vec![samples, rows, classes], data)
}

/// Monte Carlo logit-noise cross-entropy.
///
/// With `x_t = f + exp(s) * eps_t`, the per-row loss is
/// `-(logsumexp_t(x_t[c] - logsumexp(x_t)) - log T)`, averaged over rows.
/// `noise` is `[T, rows, C]` and is treated as fixed, so gradients flow into
/// `f` and `s` by reparameterisation.
pub fn stochastic_softmax_xent<T: Scalar>(
    g: &mut Graph<T>,
    logits: NodeId,
    log_sigma: NodeId,
    targets: NodeId,
    noise: &Tensor<T>,
) -> Result<NodeId> {
    same_shape(g, "stochastic_softmax_xent", &[logits, log_sigma, targets])?;
    let ls = g.shape(logits).to_vec();
    if noise.ndim() != 3 || noise.shape()[1..] != ls[..] {
        return Err(Error::shape("stochastic_softmax_xent", format!("noise {:?} for logits {:?}", noise.shape(), ls)));
    }
    let samples = noise.shape()[0];
    let eps = g.constant(noise.clone());
    let sigma = g.exp(log_sigma)?;
    let scaled = g.mul(eps, sigma)?;
    let x = g.add(scaled, logits)?;
    let lse = g.logsumexp(x)?;
    let picked_all = g.mul(x, targets)?;
    let picked = g.sum_last_axis(picked_all)?;
    let log_p = g.sub(picked, lse)?; // [T, rows]
    let per_row = g.transpose(log_p)?; // [rows, T]
    let log_sum = g.logsumexp(per_row)?; // [rows]
    let log_t = g.constant(Tensor::scalar(T::of(samples as f64).ln()));
    let log_mean = g.sub(log_sum, log_t)?;
    let neg = g.neg(log_mean)?;
    g.mean(neg)
}

/// Mean NLL plus the weight-decay prior term.
pub fn dropout_vi_objective<T: Scalar>(mean_nll: T, params: &Parameters<T>, dropout_p: f64, n: usize) -> Result<T> {
    Ok(mean_nll + weight_decay_term(params, dropout_p, n)?)
}

/// Plain-tensor evaluation of the losses.
pub mod values {
    use super::*;

    fn run<T: Scalar>(build: impl FnOnce(&mut Graph<T>) -> Result<NodeId>) -> Result<T> {
        let mut g = Graph::new();
        let id = build(&mut g)?;
        Ok(g.value(id).item())
    }

    pub fn gaussian_hetero_nll<T: Scalar>(y: &Tensor<T>, y_hat: &Tensor<T>, s: &Tensor<T>) -> Result<T> {
        run(|g| {
            let (a, b, c) = (g.constant(y.clone()), g.constant(y_hat.clone()), g.constant(s.clone()));
            super::gaussian_hetero_nll(g, a, b, c)
        })
    }

    pub fn laplace_hetero_nll<T: Scalar>(y: &Tensor<T>, y_hat: &Tensor<T>, s: &Tensor<T>) -> Result<T> {
        run(|g| {
            let (a, b, c) = (g.constant(y.clone()), g.constant(y_hat.clone()), g.constant(s.clone()));
            super::laplace_hetero_nll(g, a, b, c)
        })
    }

    pub fn fixed_sigma_nll<T: Scalar>(y: &Tensor<T>, y_hat: &Tensor<T>, sigma: T) -> Result<T> {
        run(|g| {
            let (a, b) = (g.constant(y.clone()), g.constant(y_hat.clone()));
            super::fixed_sigma_nll(g, a, b, sigma)
        })
    }

    /// Cross-entropy of a single logit vector.
    pub fn softmax_xent<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
        let targets = one_hot::<T>(&[label], logits.len())?;
        run(|g| {
            let l = g.constant(Tensor::new(vec![1, logits.len()], logits.to_vec())?);
            let t = g.constant(targets);
            super::softmax_xent(g, l, t)
        })
    }

    /// Logit-noise cross-entropy of one point with `samples` draws from `rng`.
    pub fn stochastic_softmax_xent<T: Scalar, R: Rng>(
        logits: &[T],
        log_sigma: &[T],
        label: usize,
        samples: usize,
        rng: &mut R,
    ) -> Result<T> {
        let c = logits.len();
        let noise = sample_logit_noise::<T, R>(rng, samples, 1, c)?;
        stochastic_softmax_xent_with_noise(logits, log_sigma, label, &noise)
    }

    pub fn stochastic_softmax_xent_with_noise<T: Scalar>(
        logits: &[T],
        log_sigma: &[T],
        label: usize,
        noise: &Tensor<T>,
    ) -> Result<T> {
        let c = logits.len();
        let targets = one_hot::<T>(&[label], c)?;
        run(|g| {
            let l = g.constant(Tensor::new(vec![1, c], logits.to_vec())?);
            let s = g.constant(Tensor::new(vec![1, c], log_sigma.to_vec())?);
            let t = g.constant(targets);
            super::stochastic_softmax_xent(g, l, s, t, noise)
        })
    }
}
