//! RMSProp.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::network::Parameters;
use crate::scalar::Scalar;

/// RMSProp state.
///
/// Weight decay is not applied here: `weight_decay` is the coefficient the
/// training loop puts into the objective's `||W||^2` term.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp<T> {
    pub lr: T,
    pub decay: T,
    pub eps: T,
    pub weight_decay: f64,
    accumulators: Vec<Tensor<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub const DEFAULT_LR: f64 = 1e-3;
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-8;
    pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;

    pub fn new(params: &Parameters<T>, lr: f64, weight_decay: f64) -> Self {
        Self::for_shapes(params.tensors().iter().map(|t| t.shape().to_vec()), lr, weight_decay)
    }

    pub fn for_shapes(shapes: impl IntoIterator<Item = Vec<usize>>, lr: f64, weight_decay: f64) -> Self {
        RmsProp {
            lr: T::of(lr),
            decay: T::of(Self::DEFAULT_DECAY),
            eps: T::of(Self::DEFAULT_EPS),
            weight_decay,
            accumulators: shapes.into_iter().map(Tensor::zeros).collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor<T>] {
        &self.accumulators
    }

    /// One update of `params` (in canonical order) with `grads`.
    ///
    /// Nothing is modified if any gradient is non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || grads.len() != self.accumulators.len() {
            return Err(Error::invalid(format!(
                "rmsprop: {} params, {} grads, {} accumulators",
                params.len(),
                grads.len(),
                self.accumulators.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || self.accumulators[i].shape() != g.shape() {
                return Err(Error::shape("rmsprop", format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape())));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter tensor {i}")));
            }
        }
        let one = T::one();
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            for ((w, &gi), a) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
                *a = self.decay * *a + (one - self.decay) * gi * gi;
                *w = *w - self.lr * gi / (a.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn step_params(&mut self, params: &mut Parameters<T>, grads: &[Tensor<T>]) -> Result<()> {
        let mut refs = params.tensors_mut();
        self.step(&mut refs, grads)
    }
}
