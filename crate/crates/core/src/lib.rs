//! Non-failable interacting particle approximation of absorbed Markov
//! chains conditioned on survival.
//!
//! [`engine`] runs the particle system over any [`kernel::AbsorbedKernel`];
//! [`oracle`] computes exact conditional laws and quasi-stationary
//! distributions for finite kernels; [`analysis`] compares the two.

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod kernel;
pub mod models;
pub mod oracle;
pub mod replicas;

pub use engine::{advance_one_step, run_trajectory, EngineError, ParticleEnsemble};
pub use kernel::{AbsorbedKernel, StepOutcome, SubstochasticMatrix};
pub use oracle::{Distribution, QsdResult};
