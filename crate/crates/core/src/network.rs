//! Multilayer perceptron with dropout before each weight layer and a split
//! prediction / log-scale head.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientMap, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::losses::Likelihood;
use crate::rng::{self, Domain};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Output head layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Predictions `y_hat` and log-scales `s`.
    RegressionHetero,
    RegressionPlain,
    /// Logits `f` and per-class `s = log sigma` of the logit noise.
    ClassificationHetero,
    ClassificationPlain,
}

impl Head {
    pub fn is_hetero(self) -> bool {
        matches!(self, Head::RegressionHetero | Head::ClassificationHetero)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Head::ClassificationHetero | Head::ClassificationPlain)
    }
}

fn default_log_scale_bias() -> f64 {
    -2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Hidden layer widths; at least one.
    pub hidden: Vec<usize>,
    /// Task dimension: 1 (or more) regression outputs, or the class count C.
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    pub dropout_p: f64,
    pub head: Head,
    /// Initial bias of the log-scale head.
    #[serde(default = "default_log_scale_bias")]
    pub log_scale_bias: f64,
    /// Noise family the regression log-scale refers to.
    #[serde(default)]
    pub likelihood: Likelihood,
    /// Classification only: a single noise scale shared by all classes.
    #[serde(default)]
    pub tied_scale: bool,
    /// Also drop raw input features before the first layer.
    #[serde(default)]
    pub input_dropout: bool,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, dropout_p: f64, head: Head) -> Self {
        NetworkSpec {
            input_dim,
            hidden,
            output_dim,
            activation: Activation::Relu,
            dropout_p,
            head,
            log_scale_bias: default_log_scale_bias(),
            likelihood: Likelihood::Gaussian,
            tied_scale: false,
            input_dropout: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("network.input_dim", "must be positive"));
        }
        if self.hidden.is_empty() {
            return Err(Error::config("network.hidden", "at least one hidden layer is required"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("network.hidden", "widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("network.dropout_p", format!("{} not in [0, 1)", self.dropout_p)));
        }
        if self.output_dim == 0 {
            return Err(Error::config("network.output_dim", "must be positive"));
        }
        if self.head.is_classification() && self.output_dim < 2 {
            return Err(Error::config("network.output_dim", "classification needs at least 2 classes"));
        }
        if !self.log_scale_bias.is_finite() {
            return Err(Error::config("network.log_scale_bias", "must be finite"));
        }
        Ok(())
    }

    /// Width of the log-scale head, if any.
    pub fn scale_width(&self) -> Option<usize> {
        match self.head {
            Head::ClassificationHetero if self.tied_scale => Some(1),
            h if h.is_hetero() => Some(self.output_dim),
            _ => None,
        }
    }

    /// Widths of the activations that are dropped, in layer order.
    pub fn dropout_widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 1);
        if self.input_dropout {
            w.push(self.input_dim);
        }
        w.extend_from_slice(&self.hidden);
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `[fan_in, fan_out]`.
    pub weight: Tensor<T>,
    /// `[fan_out]`.
    pub bias: Tensor<T>,
}

/// Trainable weights: hidden layers, the prediction head and the optional
/// log-scale head. Canonical tensor order is weight then bias per layer, in
/// that sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    pub hidden: Vec<Linear<T>>,
    pub mean_head: Linear<T>,
    pub scale_head: Option<Linear<T>>,
}

impl<T: Scalar> Parameters<T> {
    pub fn layers(&self) -> impl Iterator<Item = &Linear<T>> {
        self.hidden.iter().chain(std::iter::once(&self.mean_head)).chain(self.scale_head.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear<T>> {
        self.hidden.iter_mut().chain(std::iter::once(&mut self.mean_head)).chain(self.scale_head.iter_mut())
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// Sum of squared weights; biases excluded.
    pub fn weight_norm_sq(&self) -> T {
        self.layers().map(|l| l.weight.sum_sq()).fold(T::zero(), |a, b| a + b)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let expect = layer_shapes(spec);
        let got: Vec<(usize, usize)> = self.layers().map(|l| (l.weight.shape()[0], l.weight.shape()[1])).collect();
        let biases_ok = self.layers().all(|l| l.bias.shape() == [l.weight.shape()[1]]);
        if got != expect || !biases_ok {
            return Err(Error::shape("parameters", format!("expected {expect:?}, got {got:?}")));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        let c = |l: &Linear<T>| Linear { weight: l.weight.cast(), bias: l.bias.cast() };
        Parameters {
            hidden: self.hidden.iter().map(c).collect(),
            mean_head: c(&self.mean_head),
            scale_head: self.scale_head.as_ref().map(c),
        }
    }
}

/// `(fan_in, fan_out)` of every layer in canonical order.
fn layer_shapes(spec: &NetworkSpec) -> Vec<(usize, usize)> {
    let mut shapes = Vec::new();
    let mut fan_in = spec.input_dim;
    for &w in &spec.hidden {
        shapes.push((fan_in, w));
        fan_in = w;
    }
    shapes.push((fan_in, spec.output_dim));
    if let Some(sw) = spec.scale_width() {
        shapes.push((fan_in, sw));
    }
    shapes
}

/// He-initialised weights, zero biases, log-scale bias set to
/// `spec.log_scale_bias`.
pub fn init_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Parameters<T>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Domain::Init, 0);
    let mut make = |fan_in: usize, fan_out: usize, bias: f64| {
        let std = (2.0 / fan_in as f64).sqrt();
        let w: Vec<T> = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(z * std)
            })
            .collect();
        Linear {
            weight: Tensor::new(vec![fan_in, fan_out], w).expect("layer shape"),
            bias: Tensor::filled(vec![fan_out], T::of(bias)),
        }
    };
    let shapes = layer_shapes(spec);
    let n_hidden = spec.hidden.len();
    let hidden = shapes[..n_hidden].iter().map(|&(i, o)| make(i, o, 0.0)).collect();
    let mean_head = make(shapes[n_hidden].0, shapes[n_hidden].1, 0.0);
    let scale_head = shapes.get(n_hidden + 1).map(|&(i, o)| make(i, o, spec.log_scale_bias));
    Ok(Parameters { hidden, mean_head, scale_head })
}

/// Binary dropout masks for one stochastic pass.
///
/// Entries are 0 or 1; the forward pass rescales kept units by `1 / (1 - p)`.
/// A mask tensor is either `[rows, width]` (one mask per input row, used in
/// training) or `[width]` (one weight sample shared by the whole batch, used
/// for Monte Carlo prediction).
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T> {
    pub layers: Vec<Tensor<T>>,
    pub seed: u64,
    pub sample_index: u64,
}

impl<T: Scalar> DropoutMask<T> {
    /// Masks drawn from the `(seed, domain, sample_index)` stream. `rows` of
    /// `None` gives a batch-shared mask.
    pub fn sample(spec: &NetworkSpec, rows: Option<usize>, seed: u64, domain: Domain, sample_index: u64) -> Self {
        let keep = 1.0 - spec.dropout_p;
        let mut rng = rng::stream(seed, domain, sample_index);
        let layers = spec
            .dropout_widths()
            .into_iter()
            .map(|w| {
                let shape = match rows {
                    Some(r) => vec![r, w],
                    None => vec![w],
                };
                let n = shape.iter().product();
                let data = (0..n).map(|_| if rng.random::<f64>() < keep { T::one() } else { T::zero() }).collect();
                Tensor::new(shape, data).expect("mask shape")
            })
            .collect();
        DropoutMask { layers, seed, sample_index }
    }

    /// Mask for Monte Carlo sample `t` of a prediction run.
    pub fn mc_sample(spec: &NetworkSpec, seed: u64, t: u64) -> Self {
        Self::sample(spec, None, seed, Domain::McDropout, t)
    }
}

/// Parameter leaves of one graph, mirroring [`Parameters`].
#[derive(Clone, Debug)]
pub struct ParamNodes {
    layers: Vec<(NodeId, NodeId)>,
    has_scale_head: bool,
}

impl ParamNodes {
    /// Records `params` as trainable leaves (`trainable = false` records them
    /// as constants, for inference).
    pub fn record<T: Scalar>(g: &mut Graph<T>, params: &Parameters<T>, trainable: bool) -> Self {
        let layers = params
            .layers()
            .map(|l| {
                if trainable {
                    (g.param(l.weight.clone()), g.param(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                }
            })
            .collect();
        ParamNodes { layers, has_scale_head: params.scale_head.is_some() }
    }

    pub fn weights(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers.iter().map(|&(w, _)| w)
    }

    /// Gradients in canonical parameter order.
    pub fn collect_grads<T: Scalar>(&self, grads: &mut GradientMap<T>) -> Result<Vec<Tensor<T>>> {
        self.layers
            .iter()
            .flat_map(|&(w, b)| [w, b])
            .map(|id| grads.remove(&id).ok_or_else(|| Error::invalid(format!("no gradient for {id:?}"))))
            .collect()
    }

    fn n_hidden(&self) -> usize {
        self.layers.len() - 1 - usize::from(self.has_scale_head)
    }
}

/// Head outputs as graph nodes.
#[derive(Clone, Copy, Debug)]
pub struct HeadNodes {
    /// `y_hat` or logits, `[rows, output_dim]`.
    pub mean: NodeId,
    /// Log-scale `s`, `[rows, output_dim]` (tied heads are expanded).
    pub log_scale: Option<NodeId>,
}

/// Head outputs as values.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutput<T> {
    pub mean: Tensor<T>,
    pub log_scale: Option<Tensor<T>>,
}

fn affine<T: Scalar>(g: &mut Graph<T>, x: NodeId, (w, b): (NodeId, NodeId)) -> Result<NodeId> {
    let z = g.matmul(x, w)?;
    g.add(z, b)
}

fn check_finite<T: Scalar>(g: &Graph<T>, id: NodeId, layer: usize) -> Result<()> {
    if g.value(id).all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("activations of layer {layer}")))
    }
}

/// Records the forward pass on `g`. Without a mask this is the deterministic
/// MAP pass.
pub fn forward_graph<T: Scalar>(
    g: &mut Graph<T>,
    spec: &NetworkSpec,
    nodes: &ParamNodes,
    x: NodeId,
    mask: Option<&DropoutMask<T>>,
) -> Result<HeadNodes> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 2 || xs[1] != spec.input_dim {
        return Err(Error::shape("forward", format!("input {xs:?}, expected [rows, {}]", spec.input_dim)));
    }
    let rows = xs[0];
    if let Some(m) = mask {
        let widths = spec.dropout_widths();
        let ok = m.layers.len() == widths.len()
            && m.layers.iter().zip(&widths).all(|(t, &w)| t.shape() == [w] || t.shape() == [rows, w]);
        if !ok {
            let got: Vec<_> = m.layers.iter().map(|t| t.shape().to_vec()).collect();
            return Err(Error::shape("forward", format!("mask {got:?} for widths {widths:?}, rows {rows}")));
        }
    }
    let inv_keep = T::one() / (T::one() - T::of(spec.dropout_p));
    let mut masks = mask.map(|m| m.layers.iter());
    let mut drop = |g: &mut Graph<T>, h: NodeId| -> Result<NodeId> {
        match masks.as_mut().and_then(Iterator::next) {
            Some(m) => {
                let scaled = g.constant(m.map(|v| v * inv_keep));
                g.mul(h, scaled)
            }
            None => Ok(h),
        }
    };

    let mut h = x;
    if spec.input_dropout {
        h = drop(g, h)?;
    }
    for layer in 0..nodes.n_hidden() {
        let z = affine(g, h, nodes.layers[layer])?;
        h = g.relu(z)?;
        check_finite(g, h, layer)?;
        h = drop(g, h)?;
    }
    let head_idx = nodes.n_hidden();
    let mean = affine(g, h, nodes.layers[head_idx])?;
    check_finite(g, mean, head_idx)?;
    let log_scale = if nodes.has_scale_head {
        let mut s = affine(g, h, nodes.layers[head_idx + 1])?;
        if spec.tied_scale && spec.output_dim > 1 {
            let ones = g.constant(Tensor::ones(vec![1, spec.output_dim]));
            s = g.matmul(s, ones)?;
        }
        check_finite(g, s, head_idx + 1)?;
        Some(s)
    } else {
        None
    };
    Ok(HeadNodes { mean, log_scale })
}

/// Forward pass on values.
pub fn forward<T: Scalar>(
    params: &Parameters<T>,
    spec: &NetworkSpec,
    x: &Tensor<T>,
    mask: Option<&DropoutMask<T>>,
) -> Result<HeadOutput<T>> {
    let mut g = Graph::new();
    let nodes = ParamNodes::record(&mut g, params, false);
    let xn = g.constant(x.clone());
    let out = forward_graph(&mut g, spec, &nodes, xn, mask)?;
    Ok(HeadOutput { mean: g.value(out.mean).clone(), log_scale: out.log_scale.map(|s| g.value(s).clone()) })
}

/// `(1 - p) / (2N) * ||W||^2` over weight matrices.
pub fn weight_decay_term<T: Scalar>(params: &Parameters<T>, dropout_p: f64, n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::invalid("weight_decay_term: N must be at least 1"));
    }
    Ok(decay_coefficient::<T>(dropout_p, 1.0 / n as f64) * params.weight_norm_sq())
}

/// Factor multiplying `||W||^2` in the training objective: `lambda (1 - p) / 2`.
/// With `lambda = 1 / N` this is the dropout variational objective's prior term.
pub fn decay_coefficient<T: Scalar>(dropout_p: f64, lambda: f64) -> T {
    T::of(lambda * (1.0 - dropout_p) / 2.0)
}

/// Records `coefficient * ||W||^2` on the graph.
pub fn weight_decay_node<T: Scalar>(g: &mut Graph<T>, nodes: &ParamNodes, coefficient: T) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for w in nodes.weights().collect::<Vec<_>>() {
        let sq = g.square(w)?;
        let s = g.sum(sq)?;
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    let total = total.expect("at least one layer");
    g.scale(total, coefficient)
}
