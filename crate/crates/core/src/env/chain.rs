use super::{Environment, Transition};
use crate::error::EnvError;

/// States `s_0 ..= s_100`.
pub const CHAIN_STATES: usize = 101;
pub const CHAIN_TERMINAL: usize = CHAIN_STATES - 1;
pub const CHAIN_STEP_REWARD: f64 = -1.0;
pub const CHAIN_GOAL_REWARD: f64 = 100.0;

/// Reward for moving from state `from` to state `to`.
pub fn chain_reward(from: usize, to: usize) -> f64 {
    if from == CHAIN_TERMINAL - 1 && to == CHAIN_TERMINAL {
        CHAIN_GOAL_REWARD
    } else {
        CHAIN_STEP_REWARD
    }
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Deterministic chain with a single action that always advances one state.
#[derive(Debug, Clone, Default)]
pub struct ChainEnv {
    current: usize,
}

impl ChainEnv {
    pub fn new() -> Self {
        Self { current: 0 }
    }

    pub fn current(&self) -> usize {
        self.current
    }

    /// Places the agent at state `index`.
    pub fn set_state(&mut self, index: usize) -> Result<(), EnvError> {
        if index > CHAIN_TERMINAL {
            return Err(EnvError::StateOutOfRange {
                index,
                max: CHAIN_TERMINAL,
            });
        }
        self.current = index;
        Ok(())
    }

    /// Index-level step: `(reward, next index, done)`.
    pub fn step_index(&mut self) -> Result<(f64, usize, bool), EnvError> {
        if self.current == CHAIN_TERMINAL {
            return Err(EnvError::EpisodeOver);
        }
        let next = self.current + 1;
        let reward = chain_reward(self.current, next);
        self.current = next;
        Ok((reward, next, next == CHAIN_TERMINAL))
    }
}

impl Environment for ChainEnv {
    fn name(&self) -> &'static str {
        "chain"
    }

    fn state_dim(&self) -> usize {
        CHAIN_STATES
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Vec<f64> {
        self.current = 0;
        one_hot(0, CHAIN_STATES)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError> {
        if action.len() != 1 {
            return Err(EnvError::ActionDimension {
                expected: 1,
                found: action.len(),
            });
        }
        let from = self.current;
        let (reward, next, done) = self.step_index()?;
        Ok(Transition {
            state: one_hot(from, CHAIN_STATES),
            action: action.to_vec(),
            reward,
            next_state: one_hot(next, CHAIN_STATES),
            done,
        })
    }

    fn episode_over(&self) -> bool {
        self.current == CHAIN_TERMINAL
    }
}

/// Undiscounted return from state `index`, obtained by walking the chain.
pub fn true_chain_value(index: usize) -> Result<f64, EnvError> {
    true_chain_value_discounted(index, 1.0)
}

pub fn true_chain_value_discounted(index: usize, gamma: f64) -> Result<f64, EnvError> {
    let mut env = ChainEnv::new();
    env.set_state(index)?;
    let mut total = 0.0;
    let mut discount = 1.0;
    while !env.episode_over() {
        let (r, _, _) = env.step_index()?;
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}
