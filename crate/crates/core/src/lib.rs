//! Multi-objective Pareto set generation by reverse diffusion.
//!
//! NSGA-II runs on benchmark problems are recorded generation by generation.
//! Read backwards, each trajectory is a forward diffusion chain from a converged
//! population to random noise; per-step Gaussian noise models are estimated
//! from it, optionally reweighted by mutual-information attention. A library of
//! such models then generates approximate Pareto sets for new problems by
//! reverse diffusion, spending objective evaluations only at a sparse schedule
//! of similarity checks.

pub mod attention;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod moea;
pub mod parallel;
mod population;
pub mod problems;
pub mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::{FeLedger, Phase};
pub use problems::{make_problem, MopInstance, Population, Space, Suite};
