//! Runtime-distribution (RTD) prediction for randomized algorithms.
//!
//! Two models share one pipeline:
//!
//! - **DistNet**: a feed-forward network mapping instance features to the
//!   parameters of a parametric runtime distribution, trained on the
//!   negative log-likelihood of observed runtimes.
//! - **Bayes DistNet**: the same feature-to-runtime mapping with a
//!   diagonal-Gaussian variational posterior over every weight. Each
//!   stochastic forward pass emits one runtime; a closed-form MLE over
//!   the Monte Carlo outputs yields the predictive distribution.
//!
//! Both support Type-I censored observations through the survival
//! function. The [`eval`] module computes NLLH, KL divergence, KS distance
//! and out-of-range mass, and runs the cross-validated sweeps.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diffmath;
pub mod dist;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod net;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
