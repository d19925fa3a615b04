//! SMC² for state space models with adaptive switching between particle
//! marginal Metropolis-Hastings (PMMH) and particle Gibbs (PG) mutation
//! kernels, plus a benchmark harness for efficiency comparisons.
//!
//! The crate is organized around the phases of the sampler:
//!
//! - [`model`]: the state space model interface and four built-in models
//! - [`filter`]: bootstrap / conditional particle filters and backward sampling
//! - [`kernel`]: the PMMH and blocked-MALA particle Gibbs mutation kernels
//! - [`switching`]: weight-preserving moves between kernel representations
//! - [`adapt`]: squared-jumping-distance scoring and the adaptive move step
//! - [`engine`]: the SMC² orchestrator (data annealing and density tempering)
//! - [`bench`]: Kalman oracle, gold-standard runs and efficiency scoring

pub mod adapt;
pub mod bench;
pub mod config;
pub mod dist;
pub mod engine;
pub mod error;
pub mod filter;
pub mod kernel;
pub mod model;
pub mod rng;
pub mod stats;
pub mod switching;
pub mod transform;

pub use error::{Error, Result};
