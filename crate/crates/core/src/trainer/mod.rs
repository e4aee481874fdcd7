//! Data collection, replay, model and policy updates, checkpoints, evaluation.
//!
//! A run directory holds:
//!
//! ```text
//! <out>/metrics.csv                      one row per evaluation point
//! <out>/checkpoints/latest/policy.json   rewritten at every checkpoint event
//! <out>/checkpoints/latest/critics.json
//! <out>/checkpoints/latest/world_model.json   (model-based strategies only)
//! <out>/checkpoints/final/...            same files at the end of the run
//! <out>/checkpoints/halted/...           agent state when a run halts early
//! <out>/diagnostic.txt                   only when a run halts early
//! ```
//!
//! The CLI adds `manifest.toml` (see [`RunManifest`]).

mod async_run;
mod config;
mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;

pub use async_run::{run_async, run_async_with, AsyncOptions, EnvFactory, RunFailure};
pub use config::{Profile, TrainConfig};
pub use manifest::{RunManifest, ToySettings};

use crate::agent::{Agent, PolicyNet};
use crate::batch::Batch;
use crate::checkpoint;
use crate::env::{
    make_env, true_chain_value_discounted, Environment, CHAIN_STATES, CHAIN_TERMINAL,
};
use crate::error::{ConfigError, EnvError, TrainError};
use crate::metrics::{write_csv_file, MetricsRow};
use crate::numerics::{stream, Rng};
use crate::replay::ReplayBuffer;
use crate::value_expansion::{
    expansion_targets, model_usage, rollout, td_targets, tdk_regression_set, Policy, QFunction,
    RegressionSet, Weighting, WeightingStrategy,
};
use crate::world_model::{ModelEnsemble, ModelLoss, ModelSnapshot};

pub(crate) const STREAM_AGENT_INIT: u64 = 0;
pub(crate) const STREAM_MODEL_INIT: u64 = 1;
pub(crate) const STREAM_ENV: u64 = 2;
pub(crate) const STREAM_COLLECT: u64 = 3;
pub(crate) const STREAM_POLICY_BATCH: u64 = 4;
pub(crate) const STREAM_MODEL_BATCH: u64 = 5;
pub(crate) const STREAM_EVAL_ENV: u64 = 6;

/// Everything a finished (or halted) run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub rows: Vec<MetricsRow>,
    /// Model usage of every policy update, in order.
    pub usage_per_update: Vec<f64>,
    pub policy_updates: u64,
    pub model_updates: u64,
    /// Frames inserted into the replay buffer.
    pub frames: u64,
    /// Frames collected by each actor (a single entry in synchronous mode).
    pub actor_frames: Vec<u64>,
    /// Transitions whose checksum did not match on arrival (asynchronous mode).
    pub checksum_failures: u64,
    pub skipped_targets: u64,
    pub agent: Agent,
    pub model: Option<ModelSnapshot>,
}

/// Environment seed and evaluation seed for a run seed.
pub fn env_seeds(seed: u64) -> (u64, u64) {
    (
        stream(seed, STREAM_ENV).random(),
        stream(seed, STREAM_EVAL_ENV).random(),
    )
}

/// Mean undiscounted return of `policy` over `episodes` episodes.
pub fn evaluate<F>(
    mut policy: F,
    env: &mut dyn Environment,
    episodes: usize,
) -> Result<f64, TrainError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if episodes == 0 {
        return Err(ConfigError::InvalidField {
            field: "episodes",
            reason: "must be at least 1".into(),
        }
        .into());
    }
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = env.reset();
        while !env.episode_over() {
            let t = env.step(&policy(&state))?;
            total += t.reward;
            state = t.next_state;
        }
    }
    Ok(total / episodes as f64)
}

/// Greedy evaluation of a policy network.
pub fn evaluate_policy(
    policy: &PolicyNet,
    env: &mut dyn Environment,
    episodes: usize,
) -> Result<f64, TrainError> {
    evaluate(
        |s| policy.action(s).expect("policy input matches env"),
        env,
        episodes,
    )
}

/// Mean return of uniformly random actions in `[-1, 1]`.
pub fn evaluate_random(
    env: &mut dyn Environment,
    episodes: usize,
    rng: &mut Rng,
) -> Result<f64, TrainError> {
    let dim = env.action_dim();
    evaluate(|_| random_action(rng, dim), env, episodes)
}

/// Mean squared error of the critic-ensemble value against the discounted
/// brute-force chain values over the nonterminal states.
pub fn chain_value_error(agent: &Agent, gamma: f64) -> f64 {
    let states = Array2::from_shape_fn((CHAIN_TERMINAL, CHAIN_STATES), |(i, j)| {
        if i == j {
            1.0
        } else {
            0.0
        }
    });
    let actions = agent.policy.act(states.view());
    let mut mean = Array1::<f64>::zeros(CHAIN_TERMINAL);
    for c in &agent.critics {
        mean += &c.value(states.view(), actions.view());
    }
    mean /= agent.critics.len() as f64;
    (0..CHAIN_TERMINAL)
        .map(|i| (mean[i] - true_chain_value_discounted(i, gamma).expect("nonterminal")).powi(2))
        .sum::<f64>()
        / CHAIN_TERMINAL as f64
}

pub(crate) fn random_action(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// One environment plus its current observation.
pub(crate) struct Collector {
    env: Box<dyn Environment>,
    state: Vec<f64>,
}

impl Collector {
    pub(crate) fn new(mut env: Box<dyn Environment>) -> Self {
        let state = env.reset();
        Self { env, state }
    }

    pub(crate) fn state(&self) -> &[f64] {
        &self.state
    }

    pub(crate) fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    pub(crate) fn step(&mut self, action: &[f64]) -> Result<crate::env::Transition, EnvError> {
        let t = self.env.step(action)?;
        self.state = if self.env.episode_over() {
            self.env.reset()
        } else {
            t.next_state.clone()
        };
        Ok(t)
    }
}

/// Running means between two evaluation points.
#[derive(Debug, Default, Clone)]
pub(crate) struct Window {
    critic: (f64, u64),
    model: (f64, u64),
    usage: (f64, u64),
}

impl Window {
    fn mean((sum, n): (f64, u64)) -> Option<f64> {
        (n > 0).then(|| sum / n as f64)
    }

    pub(crate) fn add_model_loss(&mut self, loss: f64) {
        self.model.0 += loss;
        self.model.1 += 1;
    }

    pub(crate) fn take(&mut self) -> (Option<f64>, Option<f64>, Option<f64>) {
        let out = (
            Self::mean(self.critic),
            Self::mean(self.model),
            Self::mean(self.usage),
        );
        *self = Self::default();
        out
    }
}

/// The policy learner: critics, actor, frozen targets and the model snapshot
/// used for target computation.
pub(crate) struct Learner {
    pub(crate) agent: Agent,
    pub(crate) snapshot: Option<ModelSnapshot>,
    strategy: WeightingStrategy,
    horizon: usize,
    gamma: f64,
    tdk: bool,
    batch_size: usize,
    rng: Rng,
    pub(crate) updates: u64,
    pub(crate) usage: Vec<f64>,
    pub(crate) window: Window,
    skipped_rows: u64,
}

impl Learner {
    pub(crate) fn new(config: &TrainConfig, agent: Agent) -> Result<Self, TrainError> {
        let strategy = config.weighting_strategy()?;
        Ok(Self {
            agent,
            snapshot: None,
            strategy,
            horizon: config.horizon,
            gamma: config.gamma,
            tdk: config.tdk,
            batch_size: config.policy_batch,
            rng: stream(config.seed, STREAM_POLICY_BATCH),
            updates: 0,
            usage: Vec::new(),
            window: Window::default(),
            skipped_rows: 0,
        })
    }

    fn uses_model(&self) -> bool {
        self.horizon > 0 && self.strategy.kind.uses_model()
    }

    pub(crate) fn skipped_targets(&self) -> u64 {
        self.agent.skipped_targets() + self.skipped_rows
    }

    /// One critic step per ensemble member followed by one actor step.
    pub(crate) fn update(&mut self, buffer: &ReplayBuffer) -> Result<(), TrainError> {
        let batches: Vec<Batch> = (0..self.agent.critics.len())
            .map(|_| buffer.sample(&mut self.rng, self.batch_size))
            .collect();
        let (gamma, horizon, strategy) = (self.gamma, self.horizon, self.strategy);
        let (critic_loss, usage) = if !self.uses_model() {
            let loss = self.agent.critic_update(&batches, |a, b| {
                td_targets(b, &a.target_critics, &a.policy, gamma)
            })?;
            (loss, 0.0)
        } else {
            let snap = self
                .snapshot
                .as_ref()
                .expect("model-based targets need a model snapshot before updates");
            if self.tdk && matches!(strategy.kind, Weighting::Mve | Weighting::EnsembleMve) {
                let sets: Vec<RegressionSet> = batches
                    .iter()
                    .map(|b| {
                        let bundle = rollout(
                            &snap.dynamics,
                            &self.agent.policy,
                            b.next_states.view(),
                            b.dones.view(),
                            horizon,
                            gamma,
                        );
                        let set = tdk_regression_set(
                            &bundle,
                            b,
                            &snap.rewards,
                            &self.agent.target_critics,
                        );
                        let (set, dropped) = finite_rows(set);
                        self.skipped_rows += dropped;
                        set
                    })
                    .collect();
                (self.agent.fit_critics(&sets)?, 1.0)
            } else {
                let mut weights: Vec<Vec<f64>> = Vec::new();
                let loss = self.agent.critic_update(&batches, |a, b| {
                    let combined = expansion_targets(
                        b,
                        &snap.dynamics,
                        &snap.rewards,
                        &a.target_critics,
                        &a.policy,
                        horizon,
                        gamma,
                        &strategy,
                    );
                    let targets = combined.iter().map(|c| c.target).collect();
                    weights.extend(combined.into_iter().map(|c| c.weights));
                    targets
                })?;
                (loss, model_usage(&weights))
            }
        };
        if !critic_loss.is_finite() {
            return Err(TrainError::Diverged {
                what: "critic loss",
                update: self.updates + 1,
            });
        }
        let actor_loss = self.agent.actor_update(batches[0].states.view())?;
        if !actor_loss.is_finite() {
            return Err(TrainError::Diverged {
                what: "actor loss",
                update: self.updates + 1,
            });
        }
        self.updates += 1;
        self.usage.push(usage);
        self.window.critic.0 += critic_loss;
        self.window.critic.1 += 1;
        self.window.usage.0 += usage;
        self.window.usage.1 += 1;
        Ok(())
    }
}

fn finite_rows(set: RegressionSet) -> (RegressionSet, u64) {
    let keep: Vec<usize> = (0..set.targets.len())
        .filter(|&i| set.targets[i].is_finite())
        .collect();
    let dropped = (set.targets.len() - keep.len()) as u64;
    if dropped == 0 {
        return (set, 0);
    }
    let positions = keep.iter().map(|&i| set.positions[i]).collect();
    (
        RegressionSet {
            states: set.states.select(Axis(0), &keep),
            actions: set.actions.select(Axis(0), &keep),
            targets: set.targets.select(Axis(0), &keep),
            weights: set.weights.select(Axis(0), &keep),
            positions,
        },
        dropped,
    )
}

pub(crate) fn save_checkpoint(
    dir: &Path,
    agent: &Agent,
    model: Option<&ModelSnapshot>,
) -> Result<(), TrainError> {
    checkpoint::save(&agent.policy, &dir.join("policy.json"))?;
    checkpoint::save(&agent.critics, &dir.join("critics.json"))?;
    if let Some(m) = model {
        checkpoint::save(m, &dir.join("world_model.json"))?;
    }
    Ok(())
}

pub(crate) fn write_diagnostic(out: &Path, error: &TrainError, learner: &Learner) {
    let mut text = String::new();
    let _ = writeln!(text, "error: {error}");
    let _ = writeln!(text, "policy updates completed: {}", learner.updates);
    let _ = writeln!(text, "skipped targets: {}", learner.skipped_targets());
    if let Some(u) = learner.usage.last() {
        let _ = writeln!(text, "last model usage: {u}");
    }
    let _ = fs::create_dir_all(out);
    let _ = fs::write(out.join("diagnostic.txt"), text);
    let _ = save_checkpoint(
        &out.join("checkpoints").join("halted"),
        &learner.agent,
        learner.snapshot.as_ref(),
    );
}

pub(crate) fn metrics_path(out: &Path) -> PathBuf {
    out.join("metrics.csv")
}

/// Builds the agent for `config` from the run seed.
pub fn initial_agent(config: &TrainConfig, state_dim: usize, action_dim: usize) -> Agent {
    Agent::new(
        state_dim,
        action_dim,
        config.agent_config(),
        &mut stream(config.seed, STREAM_AGENT_INIT),
    )
}

pub(crate) fn initial_models(
    config: &TrainConfig,
    state_dim: usize,
    action_dim: usize,
) -> ModelEnsemble {
    ModelEnsemble::new(
        state_dim,
        action_dim,
        config.dynamics_ensemble,
        config.reward_ensemble,
        &config.model_config(),
        &mut stream(config.seed, STREAM_MODEL_INIT),
    )
}

pub(crate) fn eval_row(
    config: &TrainConfig,
    agent: &Agent,
    updates: u64,
    frames: u64,
    window: &mut Window,
) -> Result<MetricsRow, TrainError> {
    let (_, eval_seed) = env_seeds(config.seed);
    let mut env = make_env(&config.env, eval_seed)?;
    let score = evaluate_policy(&agent.policy, env.as_mut(), config.eval_episodes)?;
    let (critic_loss, model_loss, model_usage) = window.take();
    Ok(MetricsRow {
        step: updates,
        frames,
        score: Some(score),
        value_error: (config.env == "chain").then(|| chain_value_error(agent, config.gamma)),
        critic_loss,
        model_loss,
        model_usage,
        wall_clock_s: None,
    })
}

/// Synchronous, deterministic training run.
///
/// Warmup with random actions, model pretraining (model-based strategies
/// only), then cycles of `frames_per_cycle` exploratory frames followed by
/// `updates_per_cycle` policy updates, each paired with one model update.
/// Target critics and the model snapshot refresh every
/// `checkpoint_interval` updates; evaluation rows are recorded at update 0
/// and every `eval_interval` updates.
pub fn run_training(config: &TrainConfig, out: Option<&Path>) -> Result<RunArtifacts, TrainError> {
    config.validate()?;
    let (env_seed, _) = env_seeds(config.seed);
    let env = make_env(&config.env, env_seed)?;
    let agent = initial_agent(config, env.state_dim(), env.action_dim());
    run_training_from(config, agent, out)
}

/// [`run_training`] starting from a given agent, which must match the environment.
pub fn run_training_from(
    config: &TrainConfig,
    agent: Agent,
    out: Option<&Path>,
) -> Result<RunArtifacts, TrainError> {
    config.validate()?;
    let (env_seed, _) = env_seeds(config.seed);
    let env = make_env(&config.env, env_seed)?;
    let (sd, ad) = (env.state_dim(), env.action_dim());
    if agent.state_dim() != sd || agent.action_dim() != ad {
        return Err(TrainError::DimensionMismatch {
            env_state: sd,
            env_action: ad,
            agent_state: agent.state_dim(),
            agent_action: agent.action_dim(),
        });
    }
    let mut collector = Collector::new(env);
    let mut collect_rng = stream(config.seed, STREAM_COLLECT);
    let mut model_rng = stream(config.seed, STREAM_MODEL_BATCH);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut learner = Learner::new(config, agent)?;
    let mut models = config.uses_model().then(|| initial_models(config, sd, ad));
    let mut model_updates = 0u64;
    let mut rows = Vec::new();
    let latest = out.map(|o| o.join("checkpoints").join("latest"));

    let result = (|| -> Result<(), TrainError> {
        let mut frames = 0u64;
        while frames < config.warmup_frames {
            let action = random_action(&mut collect_rng, collector.action_dim());
            buffer.push(collector.step(&action)?);
            frames += 1;
        }
        if let Some(m) = models.as_mut() {
            let loss = m.train(
                &buffer,
                config.model_pretrain_updates,
                config.model_batch,
                &mut model_rng,
            )?;
            check_model_loss(&loss, 0)?;
            model_updates += config.model_pretrain_updates as u64;
            learner.snapshot = Some(m.snapshot());
        }
        rows.push(eval_row(
            config,
            &learner.agent,
            0,
            frames,
            &mut learner.window,
        )?);

        while frames + config.frames_per_cycle as u64 <= config.total_frames {
            for _ in 0..config.frames_per_cycle {
                let action =
                    learner
                        .agent
                        .select_action(collector.state(), true, &mut collect_rng)?;
                buffer.push(collector.step(&action)?);
                frames += 1;
            }
            for _ in 0..config.updates_per_cycle {
                if let Some(m) = models.as_mut() {
                    let loss =
                        m.train_step(|rng| buffer.sample(rng, config.model_batch), &mut model_rng)?;
                    check_model_loss(&loss, learner.updates + 1)?;
                    learner.window.add_model_loss(loss.total());
                    model_updates += 1;
                }
                learner.update(&buffer)?;
                if learner.updates % config.checkpoint_interval == 0 {
                    learner.agent.refresh_targets();
                    if let Some(m) = models.as_ref() {
                        learner.snapshot = Some(m.snapshot());
                    }
                    if let Some(dir) = &latest {
                        save_checkpoint(dir, &learner.agent, learner.snapshot.as_ref())?;
                    }
                }
                if learner.updates % config.eval_interval == 0 {
                    rows.push(eval_row(
                        config,
                        &learner.agent,
                        learner.updates,
                        frames,
                        &mut learner.window,
                    )?);
                    if let Some(o) = out {
                        write_csv_file(&rows, &metrics_path(o))?;
                    }
                }
            }
        }
        if learner.updates % config.eval_interval != 0 {
            rows.push(eval_row(
                config,
                &learner.agent,
                learner.updates,
                frames,
                &mut learner.window,
            )?);
        }
        Ok(())
    })();

    if let Some(o) = out {
        write_csv_file(&rows, &metrics_path(o))?;
        if let Err(e) = &result {
            write_diagnostic(o, e, &learner);
        } else {
            let snap = models.as_ref().map(|m| m.snapshot());
            save_checkpoint(
                &o.join("checkpoints").join("final"),
                &learner.agent,
                snap.as_ref(),
            )?;
        }
    }
    result?;
    let frames = buffer.inserted();
    Ok(RunArtifacts {
        rows,
        skipped_targets: learner.skipped_targets(),
        usage_per_update: learner.usage,
        policy_updates: learner.updates,
        model_updates,
        frames,
        actor_frames: vec![frames],
        checksum_failures: 0,
        agent: learner.agent,
        model: models.map(|m| m.snapshot()),
    })
}

pub(crate) fn check_model_loss(loss: &ModelLoss, update: u64) -> Result<(), TrainError> {
    if loss.total().is_finite() {
        Ok(())
    } else {
        Err(TrainError::Diverged {
            what: "model loss",
            update,
        })
    }
}
