//! Restricted Boltzmann machines trained by contrastive divergence with
//! stochastic gradient or stochastic spectral descent.
//!
//! The runnable programs under `examples/` are the best tour of the API.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod gradient;
pub mod linalg;
pub mod model;
mod numeric;
pub mod optimizer;
pub mod sampler;
pub mod verify;

pub use error::{Error, FormatError, Result};
