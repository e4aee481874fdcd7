use serde::{Deserialize, Serialize};

use crate::agent::{ActorGradient, AgentConfig};
use crate::error::ConfigError;
use crate::value_expansion::{Weighting, WeightingStrategy};
use crate::world_model::WorldModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(ConfigError::UnknownProfile(other.to_string())),
        }
    }
}

/// Every hyperparameter of a training run.
///
/// Serialized as a flat TOML table; missing keys take the desk defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub profile: Profile,
    pub env: String,
    /// `td`, `mve`, `ensemble_mve`, `mean`, `tdlambda` (with `lambda`),
    /// `tdl25`, `tdl75`, `steve` or `cov_steve`.
    pub strategy: String,
    pub lambda: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub dynamics_ensemble: usize,
    pub reward_ensemble: usize,
    pub critic_ensemble: usize,
    pub policy_batch: usize,
    pub model_batch: usize,
    /// Policy updates performed after every `frames_per_cycle` collected frames.
    pub updates_per_cycle: usize,
    pub frames_per_cycle: usize,
    pub warmup_frames: u64,
    pub model_pretrain_updates: usize,
    pub checkpoint_interval: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub total_frames: u64,
    pub seed: u64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub transition_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub noise_scale: f64,
    /// Train the critic on every intermediate rollout state for MVE-style targets.
    pub tdk: bool,
    pub variance_floor: f64,
    pub actor_gradient: ActorGradient,
    /// Actor workers in asynchronous mode.
    pub actors: usize,
    /// Asynchronous mode only: actors wait for the learner after each cycle.
    pub gated: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            env: "pointmass".into(),
            strategy: "steve".into(),
            lambda: 0.5,
            horizon: 3,
            gamma: 0.99,
            dynamics_ensemble: 4,
            reward_ensemble: 4,
            critic_ensemble: 4,
            policy_batch: 64,
            model_batch: 128,
            updates_per_cycle: 1,
            frames_per_cycle: 4,
            warmup_frames: 2_000,
            model_pretrain_updates: 2_000,
            checkpoint_interval: 250,
            eval_interval: 500,
            eval_episodes: 5,
            total_frames: 50_000,
            seed: 0,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
            transition_hidden: vec![64, 64],
            learning_rate: 3e-4,
            epsilon: 0.05,
            noise_scale: 0.3,
            tdk: true,
            variance_floor: crate::value_expansion::DEFAULT_VARIANCE_FLOOR,
            actor_gradient: ActorGradient::EnsembleMean,
            actors: 1,
            gated: false,
        }
    }

    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            policy_batch: 512,
            model_batch: 1024,
            updates_per_cycle: 4,
            frames_per_cycle: 1,
            warmup_frames: 100_000,
            model_pretrain_updates: 100_000,
            checkpoint_interval: 500,
            eval_interval: 500,
            total_frames: 1_000_000,
            buffer_capacity: 1_000_000,
            hidden: vec![128; 4],
            transition_hidden: vec![512; 8],
            actors: 8,
            actor_gradient: ActorGradient::FirstCritic,
            ..Self::desk()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Named preset `<profile>_<env>_<strategy>`, e.g. `desk_pointmass_steve`.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let mut parts = name.splitn(3, '_');
        let (Some(profile), Some(env), Some(strategy)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(ConfigError::Parse(format!(
                "preset '{name}' is not of the form <profile>_<env>_<strategy>"
            )));
        };
        let mut config = Self::for_profile(profile.parse()?);
        config.env = env.to_string();
        config.strategy = strategy.to_string();
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn weighting(&self) -> Result<Weighting, ConfigError> {
        Weighting::parse(&self.strategy, self.lambda)
            .ok_or_else(|| ConfigError::UnknownStrategy(self.strategy.clone()))
    }

    pub fn weighting_strategy(&self) -> Result<WeightingStrategy, ConfigError> {
        Ok(WeightingStrategy {
            kind: self.weighting()?,
            variance_floor: self.variance_floor,
        })
    }

    /// Whether targets need the learned model (any strategy other than TD with a positive horizon).
    pub fn uses_model(&self) -> bool {
        self.horizon > 0 && self.weighting().is_ok_and(|w| w.uses_model())
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            critic_hidden: self.hidden.clone(),
            policy_hidden: self.hidden.clone(),
            num_critics: self.critic_ensemble,
            learning_rate: self.learning_rate,
            epsilon: self.epsilon,
            noise_scale: self.noise_scale,
            actor_gradient: self.actor_gradient,
        }
    }

    pub fn model_config(&self) -> WorldModelConfig {
        WorldModelConfig {
            transition_hidden: self.transition_hidden.clone(),
            termination_hidden: self.hidden.clone(),
            reward_hidden: self.hidden.clone(),
            learning_rate: self.learning_rate,
        }
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(field: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::InvalidField {
                field,
                reason: reason.into(),
            }
        }
        if !matches!(self.env.as_str(), "chain" | "pointmass") {
            return Err(bad("env", format!("unknown environment '{}'", self.env)));
        }
        let kind = self.weighting()?;
        if let Weighting::TdLambda(l) = kind {
            if !(l > 0.0 && l <= 1.0) {
                return Err(bad("lambda", "must lie in (0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(bad("gamma", "must lie in [0, 1)"));
        }
        let positive = [
            ("dynamics_ensemble", self.dynamics_ensemble as u64),
            ("reward_ensemble", self.reward_ensemble as u64),
            ("critic_ensemble", self.critic_ensemble as u64),
            ("policy_batch", self.policy_batch as u64),
            ("model_batch", self.model_batch as u64),
            ("updates_per_cycle", self.updates_per_cycle as u64),
            ("frames_per_cycle", self.frames_per_cycle as u64),
            ("checkpoint_interval", self.checkpoint_interval),
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes as u64),
            ("total_frames", self.total_frames),
            ("buffer_capacity", self.buffer_capacity as u64),
            ("actors", self.actors as u64),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(bad(field, "must be positive"));
            }
        }
        if self.warmup_frames > self.total_frames {
            return Err(bad("warmup_frames", "exceeds total_frames"));
        }
        let needed = self.policy_batch.max(if self.uses_model() {
            self.model_batch
        } else {
            0
        });
        if self.warmup_frames < needed as u64 {
            return Err(bad(
                "warmup_frames",
                format!("must cover one minibatch ({needed} frames)"),
            ));
        }
        if (self.buffer_capacity as u64) < needed as u64 {
            return Err(bad("buffer_capacity", "smaller than a minibatch"));
        }
        if self.hidden.contains(&0) || self.transition_hidden.contains(&0) {
            return Err(bad("hidden", "layer widths must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(bad("learning_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(bad("epsilon", "must lie in [0, 1]"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(bad("noise_scale", "must be non-negative"));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(bad("variance_floor", "must be positive"));
        }
        Ok(())
    }
}
