//! Model-based value expansion for actor-critic learning.
//!
//! The crate computes regression targets for Q-functions from short rollouts
//! of learned models and combines the per-horizon candidates with pluggable
//! weighting strategies: one-step TD, fixed-horizon MVE, uniform and
//! TD(lambda)-style averaging, and uncertainty-aware inverse-variance
//! weighting (STEVE) with a full-covariance variant.
//!
//! Layout:
//! - [`numerics`]: dense networks, reverse-mode gradients, Adam, seeded RNG.
//! - [`env`]: the deterministic chain, its hand-given toy models, and a point-mass task.
//! - [`world_model`]: learned transition/termination/reward ensembles.
//! - [`value_expansion`]: rollouts, candidate targets, weighting, TD-k rows.
//! - [`agent`]: actor-critic with frozen target critics.
//! - [`trainer`]: replay, synchronous and asynchronous training loops, metrics.
//! - [`tabular`]: tabular value estimation on the chain with toy models.
//! - [`checkpoint`]: versioned JSON files for networks.
//! - [`cli`]: the `steve` command-line tool.

#![allow(clippy::needless_range_loop)]

pub mod agent;
pub mod batch;
pub mod checkpoint;
pub mod cli;
pub mod env;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod replay;
pub mod tabular;
pub mod trainer;
pub mod value_expansion;
pub mod world_model;

pub use batch::Batch;
pub use env::Transition;
pub use replay::ReplayBuffer;
