//! Causal effect estimation with proxy variables.
//!
//! The crate combines four pieces:
//!
//! * a minimal reverse-mode autodiff engine with AdamW, sized for the small
//!   fully connected networks used here ([`graph`], [`nn`], [`optim`]);
//! * closed-form analysis of a linear-Gaussian structural equation model
//!   with an unobserved confounder: joint covariance, Gaussian
//!   conditionals, relative bridge error, conditional mutual information,
//!   and an information-theoretic error bound ([`sem`]);
//! * seeded data generators and causal ground-truth oracles for the Demand
//!   benchmark and a synthetic confounded-survival design ([`data`]);
//! * the bridge learner itself: a conditional Gaussian sampler for
//!   p(W | x, z), squared-error and partial-likelihood bridge losses with an
//!   optional treatment/proxy autoencoder, dose-response and hazard-ratio
//!   estimation ([`sampler`], [`bridge`], [`survival`]).
//!
//! Everything is deterministic given explicit seeds; parallel code paths
//! (enabled by the default `parallel` feature) produce bitwise-identical
//! results to the sequential fallback.

pub mod bridge;
pub mod data;
pub mod error;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod nn;
pub mod optim;
pub mod par;
pub mod sampler;
pub mod seed;
pub mod sem;
pub mod survival;

pub use error::{Error, Result};
pub use matrix::Matrix;
