//! Robust deep nonparametric regression.
//!
//! ReLU multilayer perceptrons trained by Adam under Lipschitz robust losses
//! (LAD, quantile, Huber, Cauchy, Tukey) alongside least squares, on
//! synthetic targets with heavy-tailed noise. Also carries closed-form
//! calculators for the excess-risk bounds and network designs that go with
//! this estimator.
//!
//! Modules:
//! - [`losses`]: loss values, subgradients, Lipschitz constants.
//! - [`mlp`]: network shapes, parameters, forward/backward passes.
//! - [`optim`]: Adam and the mini-batch training loop.
//! - [`datagen`]: random streams, targets, noise, datasets.
//! - [`theory`]: bound evaluators, network designs, rate exponents.
//! - [`harness`]: experiment grid, testing risks, reports and plots.

// Guards like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod harness;
pub mod losses;
pub mod mlp;
pub mod optim;
pub mod theory;

pub use error::{Error, Result};
