//! Diversity-constrained contextual Thompson sampling for health-intervention
//! recommendation.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: users, challenges, weigh-ins, selections and the
//!   weight-loss / diet / exercise taxonomy.
//! - [`features`]: user and item contexts and their `[1, x, z]` concatenation.
//! - [`reward_model`]: Bayesian logistic model with a diagonal Laplace posterior.
//! - [`selector`]: exact constrained top-K selection.
//! - [`policies`]: the diversity-constrained Thompson sampler and baselines.
//! - [`evaluation`]: doubly-robust, offline-precision and simulator-based
//!   evaluation plus diversity and user-outcome analyses.
//! - [`simdata`]: seeded synthetic environments and logged interactions.
//! - [`experiment`]: config-driven experiment runner behind the CLI.

pub mod domain;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod io;
pub mod policies;
pub mod reward_model;
pub mod rng;
pub mod selector;
pub mod simdata;

pub use error::{Error, Result};
