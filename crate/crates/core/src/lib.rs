//! Replica-theory predictions and finite-dimensional simulations for linear
//! beta-VAEs trained on spiked-covariance data.
//!
//! * [`scm`] generates datasets and analyses their covariance spectrum.
//! * [`linear_vae`] holds the closed-form ELBO, its gradients, the trainer and
//!   empirical metrics.
//! * [`replica`] solves the k = k* = 1 saddle-point equations.
//! * [`analysis`] sweeps, phase diagrams, rate-distortion curves and
//!   replica-versus-simulation comparisons.
//! * [`io`] and [`config`] cover file formats and run configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod linear_vae;
pub mod replica;
pub mod scm;

pub use error::{Error, Result};
