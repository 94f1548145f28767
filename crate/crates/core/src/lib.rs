//! Bayesian composite Gaussian process (BCGP) emulator.
//!
//! The response is modelled as the sum of a smooth global process, a rougher
//! local process and white noise, all sharing an input-dependent variance
//! envelope `sigma^2(x)` that is itself a log-Gaussian process. Every unknown
//! is sampled by a Metropolis-within-Gibbs chain ([`mcmc`]) and predictions
//! are Rao-Blackwellized averages over the stored draws ([`predict`]).
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the
//! command-line driver live in the `bcgp` crate.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod kernels;
pub mod kriging;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod predict;
pub mod priors;
pub mod testbed;

pub use error::{Error, Result};
pub use kernels::{CorrelationParams, CovMatrix};
pub use mcmc::{run_chain, ChainConfig, ChainOutput, ProposalWidths};
pub use model::{HyperParams, ModelState, TrainingSet, Transform};
pub use predict::{PredictionResult, Predictor};
