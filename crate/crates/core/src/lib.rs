//! Aleatoric and epistemic uncertainty for small neural networks.
//!
//! The crate trains multilayer perceptrons with heteroscedastic losses,
//! draws Monte Carlo dropout samples, splits predictive variance into its
//! epistemic and aleatoric parts, and evaluates the resulting uncertainty
//! with calibration and precision-recall curves. Everything numeric is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`,
//! which is what the experiment runner uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod experiment;
mod fsutil;
pub mod losses;
pub mod network;
pub mod optim;
pub mod predict;
pub mod rng;
pub mod scalar;
pub mod synthdata;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Parameters64 = network::Parameters<f64>;
pub type Parameters32 = network::Parameters<f32>;
pub type RmsProp64 = optim::RmsProp<f64>;
pub type PredictiveSamples64 = predict::PredictiveSamples<f64>;
