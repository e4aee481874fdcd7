//! Learned transition, termination and reward functions, kept as ensembles.
//!
//! A [`Dynamics`] member owns the transition network (predicting a state
//! delta) and the termination head evaluated on the predicted next state.
//! Reward networks are separate members with their own ensemble size.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::ModelError;
use crate::numerics::{hcat, sigmoid, Activation, Adam, AdamConfig, Gradients, Mlp, Rng};
use crate::replay::ReplayBuffer;
use crate::value_expansion::{DynamicsModel, RewardModel};

/// Termination probabilities are clamped to `[CLAMP, 1 - CLAMP]`.
pub const TERMINATION_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModelConfig {
    pub transition_hidden: Vec<usize>,
    pub termination_hidden: Vec<usize>,
    pub reward_hidden: Vec<usize>,
    pub learning_rate: f64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            transition_hidden: vec![64, 64],
            termination_hidden: vec![64, 64],
            reward_hidden: vec![64, 64],
            learning_rate: 3e-4,
        }
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(TERMINATION_CLAMP, 1.0 - TERMINATION_CLAMP)
}

/// Transition network plus termination head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub transition: Mlp,
    pub termination: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsGrads {
    pub transition: Gradients,
    pub termination: Gradients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNet {
    pub net: Mlp,
}

/// One full parameter set: dynamics and reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub dynamics: Dynamics,
    pub reward: RewardNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelLoss {
    pub transition: f64,
    pub termination: f64,
    pub reward: f64,
}

impl ModelLoss {
    pub fn total(&self) -> f64 {
        self.transition + self.termination + self.reward
    }
}

impl Dynamics {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        config: &WorldModelConfig,
        rng: &mut Rng,
    ) -> Self {
        Self {
            transition: Mlp::new(
                &layer_sizes(state_dim + action_dim, &config.transition_hidden, state_dim),
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
            termination: Mlp::new(
                &layer_sizes(state_dim, &config.termination_hidden, 1),
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
        }
    }

    pub fn zeros(state_dim: usize, action_dim: usize, config: &WorldModelConfig) -> Self {
        Self {
            transition: Mlp::zeros(
                &layer_sizes(state_dim + action_dim, &config.transition_hidden, state_dim),
                Activation::Relu,
                Activation::Identity,
            ),
            termination: Mlp::zeros(
                &layer_sizes(state_dim, &config.termination_hidden, 1),
                Activation::Relu,
                Activation::Identity,
            ),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.transition.out_dim()
    }

    pub fn termination_prob(&self, states: ArrayView2<f64>) -> Array1<f64> {
        self.termination
            .forward_batch(states)
            .column(0)
            .mapv(|z| clamp_prob(sigmoid(z)))
    }

    /// Squared-error transition and termination cross-entropy (batch means) with their gradients.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, f64, DynamicsGrads), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let n = batch.len() as f64;
        let input = hcat(&[batch.states.view(), batch.actions.view()]);
        let trace = self.transition.forward_trace(input.view());
        let predicted = &batch.states + trace.output();
        let err = &predicted - &batch.next_states;
        let transition_loss = err.mapv(|e| e * e).sum() / n;

        let term_trace = self.termination.forward_trace(predicted.view());
        let mut term_loss = 0.0;
        let mut term_up = Array2::zeros((batch.len(), 1));
        for (i, &z) in term_trace.output().column(0).iter().enumerate() {
            let raw = sigmoid(z);
            let p = clamp_prob(raw);
            let d = batch.dones[i];
            term_loss -= d * p.ln() + (1.0 - d) * (1.0 - p).ln();
            // Inside the clamp, d(BCE)/d(logit) = p - d; outside it the loss is flat.
            if raw == p {
                term_up[[i, 0]] = (p - d) / n;
            }
        }
        term_loss /= n;
        let (term_grads, d_predicted) = self.termination.backward(&term_trace, term_up.view());
        let upstream = err.mapv(|e| 2.0 * e / n) + d_predicted;
        let (trans_grads, _) = self.transition.backward(&trace, upstream.view());
        let (tl, dl) = (transition_loss, term_loss);
        if !tl.is_finite() || !dl.is_finite() {
            return Err(ModelError::NonFiniteLoss(tl + dl));
        }
        Ok((
            tl,
            dl,
            DynamicsGrads {
                transition: trans_grads,
                termination: term_grads,
            },
        ))
    }
}

impl DynamicsModel for Dynamics {
    fn predict(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> (Array2<f64>, Array1<f64>) {
        let input = hcat(&[states, actions]);
        let next = &states + &self.transition.forward_batch(input.view());
        let term = self.termination_prob(next.view());
        (next, term)
    }
}

impl RewardNet {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        config: &WorldModelConfig,
        rng: &mut Rng,
    ) -> Self {
        Self {
            net: Mlp::new(
                &layer_sizes(2 * state_dim + action_dim, &config.reward_hidden, 1),
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
        }
    }

    pub fn zeros(state_dim: usize, action_dim: usize, config: &WorldModelConfig) -> Self {
        Self {
            net: Mlp::zeros(
                &layer_sizes(2 * state_dim + action_dim, &config.reward_hidden, 1),
                Activation::Relu,
                Activation::Identity,
            ),
        }
    }

    /// Squared-error reward term (batch mean) and its gradient.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Gradients), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let n = batch.len() as f64;
        let input = hcat(&[
            batch.states.view(),
            batch.actions.view(),
            batch.next_states.view(),
        ]);
        let trace = self.net.forward_trace(input.view());
        let err = &trace.output().column(0) - &batch.rewards;
        let loss = err.mapv(|e| e * e).sum() / n;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(loss));
        }
        let upstream = err.mapv(|e| 2.0 * e / n).insert_axis(Axis(1));
        let (grads, _) = self.net.backward(&trace, upstream.view());
        Ok((loss, grads))
    }
}

impl RewardModel for RewardNet {
    fn reward(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        next_states: ArrayView2<f64>,
    ) -> Array1<f64> {
        let input = hcat(&[states, actions, next_states]);
        self.net.forward_batch(input.view()).column(0).to_owned()
    }
}

impl WorldModel {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        config: &WorldModelConfig,
        rng: &mut Rng,
    ) -> Self {
        Self {
            dynamics: Dynamics::new(state_dim, action_dim, config, rng),
            reward: RewardNet::new(state_dim, action_dim, config, rng),
        }
    }

    pub fn zeros(state_dim: usize, action_dim: usize, config: &WorldModelConfig) -> Self {
        Self {
            dynamics: Dynamics::zeros(state_dim, action_dim, config),
            reward: RewardNet::zeros(state_dim, action_dim, config),
        }
    }

    /// `(predicted next state, termination probability, predicted reward)`.
    pub fn predict(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64, f64) {
        let s = ArrayView2::from_shape((1, state.len()), state).expect("row");
        let a = ArrayView2::from_shape((1, action.len()), action).expect("row");
        let (next, term) = self.dynamics.predict(s, a);
        let r = self.reward.reward(s, a, next.view());
        (next.row(0).to_vec(), term[0], r[0])
    }
}

/// Full model loss for one parameter set plus gradients for every network.
pub fn model_loss(
    model: &WorldModel,
    batch: &Batch,
) -> Result<(ModelLoss, DynamicsGrads, Gradients), ModelError> {
    let (transition, termination, dyn_grads) = model.dynamics.loss_and_grad(batch)?;
    let (reward, rew_grads) = model.reward.loss_and_grad(batch)?;
    Ok((
        ModelLoss {
            transition,
            termination,
            reward,
        },
        dyn_grads,
        rew_grads,
    ))
}

/// `M` dynamics members and `N` reward members with their optimizers.
#[derive(Debug, Clone)]
pub struct ModelEnsemble {
    pub dynamics: Vec<Dynamics>,
    pub rewards: Vec<RewardNet>,
    dynamics_opt: Vec<(Adam, Adam)>,
    reward_opt: Vec<Adam>,
}

/// Read-only copy of the ensemble parameters, shared with target computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub dynamics: Vec<Dynamics>,
    pub rewards: Vec<RewardNet>,
}

impl ModelEnsemble {
    /// Each member draws its initialization from `rng` in turn, so members differ.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        num_dynamics: usize,
        num_rewards: usize,
        config: &WorldModelConfig,
        rng: &mut Rng,
    ) -> Self {
        assert!(
            num_dynamics >= 1 && num_rewards >= 1,
            "ensembles need at least one member"
        );
        let adam = AdamConfig::with_learning_rate(config.learning_rate);
        let dynamics: Vec<Dynamics> = (0..num_dynamics)
            .map(|_| Dynamics::new(state_dim, action_dim, config, rng))
            .collect();
        let rewards: Vec<RewardNet> = (0..num_rewards)
            .map(|_| RewardNet::new(state_dim, action_dim, config, rng))
            .collect();
        Self::from_members(dynamics, rewards, adam)
    }

    pub fn from_members(
        dynamics: Vec<Dynamics>,
        rewards: Vec<RewardNet>,
        adam: AdamConfig,
    ) -> Self {
        let dynamics_opt = dynamics
            .iter()
            .map(|d| {
                (
                    Adam::new(adam, &d.transition),
                    Adam::new(adam, &d.termination),
                )
            })
            .collect();
        let reward_opt = rewards.iter().map(|r| Adam::new(adam, &r.net)).collect();
        Self {
            dynamics,
            rewards,
            dynamics_opt,
            reward_opt,
        }
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            dynamics: self.dynamics.clone(),
            rewards: self.rewards.clone(),
        }
    }

    /// Runs `updates` Adam steps on every member, each step on a freshly
    /// drawn minibatch per member. Returns the mean model loss of the last
    /// round (zero when `updates == 0`).
    pub fn train(
        &mut self,
        buffer: &ReplayBuffer,
        updates: usize,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Result<ModelLoss, ModelError> {
        if buffer.len() < batch_size {
            return Err(ModelError::InsufficientData {
                available: buffer.len(),
                required: batch_size,
            });
        }
        let mut last = ModelLoss::default();
        for _ in 0..updates {
            last = self.train_step(|rng| buffer.sample(rng, batch_size), rng)?;
        }
        Ok(last)
    }

    /// One Adam step per member; `draw` supplies an independent minibatch per call.
    pub fn train_step<F>(&mut self, mut draw: F, rng: &mut Rng) -> Result<ModelLoss, ModelError>
    where
        F: FnMut(&mut Rng) -> Batch,
    {
        let mut loss = ModelLoss::default();
        for (member, (t_opt, d_opt)) in self.dynamics.iter_mut().zip(&mut self.dynamics_opt) {
            let batch = draw(rng);
            let (tl, dl, grads) = member.loss_and_grad(&batch)?;
            t_opt.step(&mut member.transition, &grads.transition)?;
            d_opt.step(&mut member.termination, &grads.termination)?;
            loss.transition += tl;
            loss.termination += dl;
        }
        for (member, opt) in self.rewards.iter_mut().zip(&mut self.reward_opt) {
            let batch = draw(rng);
            let (rl, grads) = member.loss_and_grad(&batch)?;
            opt.step(&mut member.net, &grads)?;
            loss.reward += rl;
        }
        loss.transition /= self.dynamics.len() as f64;
        loss.termination /= self.dynamics.len() as f64;
        loss.reward /= self.rewards.len() as f64;
        Ok(loss)
    }
}
