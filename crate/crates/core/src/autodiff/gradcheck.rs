use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Canonical central-difference step.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Compares the reverse-mode gradient of a scalar function against central
/// differences.
///
/// `f` records the function on a fresh graph given the parameter node holding
/// `point` and returns the loss node. The result is the maximum over
/// coordinates of `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<T, F>(f: F, point: &Tensor<T>, step: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    if !(step > T::zero()) {
        return Err(Error::invalid(format!("grad_check: step must be positive, got {step}")));
    }
    let eval = |p: &Tensor<T>| -> Result<T> {
        let mut g = Graph::new();
        let x = g.param(p.clone());
        let loss = f(&mut g, x)?;
        let v = g.value(loss).item();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("grad_check: f = {v}")));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let x = g.param(point.clone());
    let loss = f(&mut g, x)?;
    if !g.value(loss).item().is_finite() {
        return Err(Error::NonFinite("grad_check: f at point".into()));
    }
    let analytic = g.backward(loss)?.remove(&x).expect("param gradient");

    let two = T::of(2.0);
    let mut worst = T::zero();
    let mut probe = point.clone();
    for i in 0..point.numel() {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + step;
        let up = eval(&probe)?;
        probe.data_mut()[i] = x0 - step;
        let down = eval(&probe)?;
        probe.data_mut()[i] = x0;
        let numeric = (up - down) / (two * step);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / T::one().max(a.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
