//! Linear-time average consensus and three protocols built on it:
//! Gaussian measurement fusion, distributed separable optimization and
//! non-Bayesian distributed hypothesis testing.
//!
//! Every protocol runs as a synchronous round-based simulation over an
//! undirected [`graph::Graph`]. The closed-form convergence envelopes in
//! [`consensus::Envelope`] can be checked against any simulated trace.

pub mod consensus;
pub mod experiment;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod learning;
pub mod optimize;
pub mod weights;

pub use error::{Error, Result};
