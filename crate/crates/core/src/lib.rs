//! Numerical smoothing for expectations of non-smooth functionals of discretized SDEs.
//!
//! The payoff kink or jump is located by Newton iteration along one well-chosen
//! Gaussian coordinate and integrated out with Gauss-Laguerre quadrature; the
//! resulting smooth integrand feeds either an adaptive sparse-grid quadrature
//! ([`asgq`]) or multilevel Monte Carlo ([`mlmc`]).

pub mod advisor;
pub mod asgq;
pub mod density;
pub mod error;
pub mod mlmc;
pub mod models;
pub mod parallel;
pub mod paths;
pub mod payoffs;
pub mod quadrules;
pub mod rng;
pub mod samplers;
pub mod smoothing;

pub use error::{Error, Result};
