//! Belief-weighted Bayesian optimization on pathwise GP samples.
//!
//! The library draws continuous GP sample paths (random Fourier features plus
//! a deterministic data update), reweights or resamples them under a user
//! belief about the optimizer location or the optimal value, and drives Monte
//! Carlo acquisition functions (LogEI, max-value entropy search, Thompson
//! sampling) over the weighted ensemble. A benchmark suite and an experiment
//! engine sit on top for reproducible regret studies.

pub mod error;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod sobol;
pub mod space;

pub mod acquisition;
pub mod belief;
pub mod benchmarks;
pub mod engine;
pub mod gp;
pub mod pathwise;
pub mod selfcheck;

pub use acquisition::AcquisitionKind;
pub use belief::{McBudget, UserBelief, WeightStrategy};
pub use engine::{BoConfig, RunRecord};
pub use error::{Error, Result};
pub use kernel::{GpHyperparams, KernelKind};
pub use space::{Dataset, SearchSpace};
