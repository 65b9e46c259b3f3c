//! Slug flow crystallizer toolkit: a diffusion-free dynamic simulator,
//! uncertainty-aware NARX surrogates (plain, conformalized quantile and
//! Bayesian last layer networks) and a multi-stage scenario-tree MPC that
//! uses the surrogates' prediction intervals.

pub mod error;
pub mod par;
pub mod sim;
pub mod surrogate;
pub mod harness;
pub mod mpc;

pub use error::{Error, Result};
