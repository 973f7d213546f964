//! Minibatch training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::losses::{self, Likelihood};
use crate::network::{self, DropoutMask, Head, NetworkSpec, ParamNodes, Parameters};
use crate::optim::RmsProp;
use crate::rng::{self, Domain};
use crate::scalar::Scalar;

/// Per-point likelihood term of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Objective {
    /// Homoscedastic Gaussian with known `sigma`.
    FixedSigma {
        sigma: f64,
    },
    /// Learned log-scale head.
    Hetero {
        likelihood: Likelihood,
    },
    SoftmaxXent,
    /// Logit-noise cross-entropy with `samples` draws per step.
    StochasticSoftmax {
        samples: usize,
    },
}

impl Objective {
    fn check_head(&self, head: Head) -> Result<()> {
        let ok = match self {
            Objective::FixedSigma { .. } => matches!(head, Head::RegressionPlain | Head::RegressionHetero),
            Objective::Hetero { .. } => head == Head::RegressionHetero,
            Objective::SoftmaxXent => head.is_classification(),
            Objective::StochasticSoftmax { .. } => head == Head::ClassificationHetero,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("network.head", format!("{head:?} cannot be trained with {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Coefficient `lambda` of the prior term `lambda (1 - p) / 2 ||W||^2`.
    /// `1 / N` gives the dropout variational objective exactly.
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub seed: u64,
}

fn default_lr() -> f64 {
    RmsProp::<f64>::DEFAULT_LR
}

fn default_weight_decay() -> f64 {
    RmsProp::<f64>::DEFAULT_WEIGHT_DECAY
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("training.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be positive"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("training.lr", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config("training.weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

/// Supervision targets.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    /// `[n, output_dim]`.
    Regression(Tensor<T>),
    Classification(Vec<usize>),
}

impl<T: Scalar> Targets<T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(t) => t.rows(),
            Targets::Classification(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean objective (NLL plus decay) over the minibatches of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Records the per-batch mean NLL.
pub fn record_nll<T: Scalar>(
    g: &mut Graph<T>,
    spec: &NetworkSpec,
    nodes: &ParamNodes,
    x: &Tensor<T>,
    targets: &Targets<T>,
    objective: Objective,
    mask: Option<&DropoutMask<T>>,
    noise: Option<&Tensor<T>>,
) -> Result<NodeId> {
    let xn = g.constant(x.clone());
    let out = network::forward_graph(g, spec, nodes, xn, mask)?;
    match (objective, targets) {
        (Objective::FixedSigma { sigma }, Targets::Regression(y)) => {
            let yn = g.constant(y.clone());
            losses::fixed_sigma_nll(g, yn, out.mean, T::of(sigma))
        }
        (Objective::Hetero { likelihood }, Targets::Regression(y)) => {
            let yn = g.constant(y.clone());
            let s = out.log_scale.ok_or_else(|| Error::invalid("hetero objective without log-scale head"))?;
            losses::hetero_nll(g, likelihood, yn, out.mean, s)
        }
        (Objective::SoftmaxXent, Targets::Classification(labels)) => {
            let t = g.constant(losses::one_hot(labels, spec.output_dim)?);
            losses::softmax_xent(g, out.mean, t)
        }
        (Objective::StochasticSoftmax { .. }, Targets::Classification(labels)) => {
            let t = g.constant(losses::one_hot(labels, spec.output_dim)?);
            let s = out.log_scale.ok_or_else(|| Error::invalid("stochastic objective without log-scale head"))?;
            let noise = noise.ok_or_else(|| Error::invalid("stochastic objective without noise draws"))?;
            losses::stochastic_softmax_xent(g, out.mean, s, t, noise)
        }
        (o, _) => Err(Error::invalid(format!("objective {o:?} does not match the target type"))),
    }
}

/// Trains `params` in place with RMSProp on shuffled minibatches.
///
/// The run is a pure function of `(spec, params, data, objective, config)`.
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    params: &mut Parameters<T>,
    x: &Tensor<T>,
    targets: &Targets<T>,
    objective: Objective,
    config: &TrainConfig,
) -> Result<TrainReport> {
    spec.validate()?;
    config.validate()?;
    objective.check_head(spec.head)?;
    params.check_shapes(spec)?;
    let n = x.rows();
    if n == 0 || n != targets.len() {
        return Err(Error::shape("train", format!("{n} inputs vs {} targets", targets.len())));
    }
    if let Objective::StochasticSoftmax { samples: 0 } = objective {
        return Err(Error::config("training.logit_samples", "must be at least 1"));
    }

    let mut opt = RmsProp::new(params, config.lr, config.weight_decay);
    let decay: T = network::decay_coefficient(spec.dropout_p, config.weight_decay);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(config.seed, Domain::Shuffle, epoch as u64));
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let step = report.steps;
            let xb = x.select_rows(batch);
            let tb = match targets {
                Targets::Regression(y) => Targets::Regression(y.select_rows(batch)),
                Targets::Classification(l) => Targets::Classification(batch.iter().map(|&i| l[i]).collect()),
            };
            let mask = (spec.dropout_p > 0.0)
                .then(|| DropoutMask::sample(spec, Some(batch.len()), config.seed, Domain::TrainDropout, step));
            let noise = match objective {
                Objective::StochasticSoftmax { samples } => {
                    let mut r = rng::stream(config.seed, Domain::LogitNoise, step);
                    Some(losses::sample_logit_noise(&mut r, samples, batch.len(), spec.output_dim)?)
                }
                _ => None,
            };

            let mut g = Graph::new();
            let nodes = ParamNodes::record(&mut g, params, true);
            let nll = record_nll(&mut g, spec, &nodes, &xb, &tb, objective, mask.as_ref(), noise.as_ref())?;
            let loss = if config.weight_decay > 0.0 {
                let d = network::weight_decay_node(&mut g, &nodes, decay)?;
                g.add(nll, d)?
            } else {
                nll
            };
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at step {step} (epoch {epoch})")));
            }
            let mut grads = g.backward(loss)?;
            let grads = nodes.collect_grads(&mut grads)?;
            opt.step_params(params, &grads).map_err(|e| Error::NonFinite(format!("step {step}: {e}")))?;
            total += value.to_f64_lossy();
            batches += 1;
            report.steps += 1;
        }
        report.epoch_losses.push(total / batches as f64);
    }
    Ok(report)
}
