//! Two-time-scale population-based training.
//!
//! Agents `(theta, h)` train their parameters with Langevin dynamics on a
//! loss and jump, at a slower rate, by copying fitter agents and mutating the
//! copied hyperparameters. The crate provides:
//!
//! - [`driver`]: the full interacting-agent simulation and its reduced
//!   counterpart that samples parameters from the training equilibrium;
//! - [`meanfield`]: grid solvers for the averaged hyperparameter equation and
//!   its replicator–mutator limit;
//! - [`fitness`]: effective-fitness estimators and bounds;
//! - [`metrics`]: distances between empirical distributions;
//! - [`cartpole`]: a DQN population on CartPole with truncation selection;
//! - [`experiment`]: configuration-driven experiment runner behind the CLI.

pub mod error;
pub mod numeric;
pub mod rng;

pub mod cartpole;
pub mod driver;
pub mod dynamics;
pub mod evolution;
pub mod experiment;
pub mod fitness;
pub mod meanfield;
pub mod metrics;
pub mod objective;
pub mod record;
pub mod types;

pub use error::{Error, Result};
pub use objective::{Himmelblau, Objective, ObjectiveId, Quadratic};
pub use record::{MetricsRecord, Phase};
pub use types::{project, Agent, SearchBox};
