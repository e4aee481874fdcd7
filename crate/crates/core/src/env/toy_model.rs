use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::{chain_reward, CHAIN_STATES, CHAIN_TERMINAL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyModelMode {
    Oracle,
    /// With probability `noise` the predicted successor is uniform over all states.
    Noisy {
        noise: f64,
    },
}

/// Hand-given dynamics model for the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyModel {
    pub mode: ToyModelMode,
    /// Number of states the noisy successor is drawn from (terminal included).
    pub num_states: usize,
}

impl ToyModel {
    pub fn oracle() -> Self {
        Self {
            mode: ToyModelMode::Oracle,
            num_states: CHAIN_STATES,
        }
    }

    pub fn noisy(noise: f64) -> Self {
        Self {
            mode: ToyModelMode::Noisy { noise },
            num_states: CHAIN_STATES,
        }
    }

    /// Predicted successor of `index`. The terminal state is absorbing.
    pub fn predict<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> usize {
        if index >= CHAIN_TERMINAL {
            return CHAIN_TERMINAL;
        }
        match self.mode {
            ToyModelMode::Oracle => index + 1,
            ToyModelMode::Noisy { noise } => {
                if rng.random::<f64>() < noise {
                    rng.random_range(0..self.num_states)
                } else {
                    index + 1
                }
            }
        }
    }

    /// Rewards along simulated paths follow the true reward scheme.
    pub fn reward(&self, from: usize, to: usize) -> f64 {
        chain_reward(from, to)
    }
}
