use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Environment, Transition};
use crate::error::EnvError;
use crate::numerics::{seeded, Rng};

/// Constants of the point-mass task. None of these come from a benchmark;
/// they are sized so an episode is solvable in well under the step limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMassConfig {
    pub dt: f64,
    pub friction: f64,
    pub max_steps: usize,
    pub action_cost: f64,
    /// Start and goal coordinates are drawn from `[-extent, extent]`.
    pub extent: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            friction: 0.1,
            max_steps: 200,
            action_cost: 0.01,
            extent: 1.0,
        }
    }
}

/// 2-D point mass pushed by a bounded force toward a goal.
///
/// Observations are `[pos - goal, vel]`, so the goal is part of the state.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    config: PointMassConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    steps: usize,
    rng: Rng,
}

impl PointMassEnv {
    pub fn new(config: PointMassConfig, seed: u64) -> Self {
        Self {
            config,
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            steps: 0,
            rng: seeded(seed),
        }
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    /// Starts an episode from an explicit configuration.
    pub fn reset_to(&mut self, pos: [f64; 2], vel: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.goal = goal;
        self.steps = 0;
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        vec![
            self.pos[0] - self.goal[0],
            self.pos[1] - self.goal[1],
            self.vel[0],
            self.vel[1],
        ]
    }
}

impl Environment for PointMassEnv {
    fn name(&self) -> &'static str {
        "pointmass"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Vec<f64> {
        let e = self.config.extent;
        let mut draw = || self.rng.random_range(-e..=e);
        let pos = [draw(), draw()];
        let goal = [draw(), draw()];
        self.reset_to(pos, [0.0; 2], goal)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError> {
        if action.len() != 2 {
            return Err(EnvError::ActionDimension {
                expected: 2,
                found: action.len(),
            });
        }
        if self.episode_over() {
            return Err(EnvError::EpisodeOver);
        }
        let state = self.observe();
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let PointMassConfig { dt, friction, .. } = self.config;
        for k in 0..2 {
            self.pos[k] += dt * self.vel[k];
            self.vel[k] += dt * a[k] - friction * self.vel[k];
        }
        self.steps += 1;
        let next_state = self.observe();
        let dist2 = next_state[0].powi(2) + next_state[1].powi(2);
        let reward = -dist2 - self.config.action_cost * (a[0] * a[0] + a[1] * a[1]);
        Ok(Transition {
            state,
            action: a.to_vec(),
            reward,
            next_state,
            done: false,
        })
    }

    fn episode_over(&self) -> bool {
        self.steps >= self.config.max_steps
    }
}
