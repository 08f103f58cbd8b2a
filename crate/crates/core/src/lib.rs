//! Bayesian illness-death models with shared frailty for semicompeting risks,
//! and causal estimands defined on the always-alive principal stratum.

pub mod error;
pub mod estimands;
pub mod imputation;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod ppc;
pub mod preprocess;
pub mod priors;
pub mod rng;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
