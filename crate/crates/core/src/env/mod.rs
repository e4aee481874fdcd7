//! Environments and the transition record shared by the whole crate.

mod chain;
mod point_mass;
mod toy_model;

pub use chain::{
    chain_reward, one_hot, true_chain_value, true_chain_value_discounted, ChainEnv,
    CHAIN_GOAL_REWARD, CHAIN_STATES, CHAIN_STEP_REWARD, CHAIN_TERMINAL,
};
pub use point_mass::{PointMassConfig, PointMassEnv};
pub use toy_model::{ToyModel, ToyModelMode};

use serde::{Deserialize, Serialize};

use crate::error::EnvError;

/// One environment step `(s, a, r, s', d(s'))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// `true` when `next_state` is terminal. Time-limit truncation is not
    /// termination and leaves this `false`.
    pub done: bool,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError>;
    /// Episode finished, either by reaching a terminal state or by the step limit.
    fn episode_over(&self) -> bool;
}

/// Builds an environment from its config name.
pub fn make_env(name: &str, seed: u64) -> Result<Box<dyn Environment>, EnvError> {
    match name {
        "chain" => Ok(Box::new(ChainEnv::new())),
        "pointmass" => Ok(Box::new(PointMassEnv::new(
            PointMassConfig::default(),
            seed,
        ))),
        other => Err(EnvError::UnknownEnvironment(other.to_string())),
    }
}
