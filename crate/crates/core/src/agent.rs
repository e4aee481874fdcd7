//! Deterministic actor-critic with an ensemble of critics and frozen copies.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::NumericsError;
use crate::numerics::{hcat, Activation, Adam, AdamConfig, Gradients, Mlp, Rng};
use crate::value_expansion::{Policy, QFunction, RegressionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorGradient {
    /// Differentiate through the first critic only.
    FirstCritic,
    /// Differentiate through the mean of all critics.
    EnsembleMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub critic_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub num_critics: usize,
    pub learning_rate: f64,
    /// Probability of perturbing an action while collecting data.
    pub epsilon: f64,
    /// Standard deviation of the pre-squash perturbation.
    pub noise_scale: f64,
    pub actor_gradient: ActorGradient,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            critic_hidden: vec![64, 64],
            policy_hidden: vec![64, 64],
            num_critics: 4,
            learning_rate: 3e-4,
            epsilon: 0.05,
            noise_scale: 0.3,
            actor_gradient: ActorGradient::FirstCritic,
        }
    }
}

/// Factor applied to the initial output-layer weights of the policy.
const POLICY_OUTPUT_SCALE: f64 = 1e-2;

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

/// Policy network; its raw output is squashed with `tanh` into `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub net: Mlp,
}

impl PolicyNet {
    pub fn pre_squash(&self, states: ArrayView2<f64>) -> Array2<f64> {
        self.net.forward_batch(states)
    }

    pub fn action(&self, state: &[f64]) -> Result<Vec<f64>, NumericsError> {
        Ok(self
            .net
            .forward(state)?
            .into_iter()
            .map(f64::tanh)
            .collect())
    }

    /// With probability `epsilon`, perturbs the pre-squash output with
    /// Gaussian noise of standard deviation `noise_scale` before squashing.
    pub fn explore(
        &self,
        state: &[f64],
        epsilon: f64,
        noise_scale: f64,
        rng: &mut Rng,
    ) -> Result<Vec<f64>, NumericsError> {
        let mut pre = self.net.forward(state)?;
        if rng.random::<f64>() < epsilon {
            for v in &mut pre {
                let z: f64 = rng.sample(StandardNormal);
                *v += noise_scale * z;
            }
        }
        Ok(pre.into_iter().map(f64::tanh).collect())
    }
}

impl Policy for PolicyNet {
    fn act(&self, states: ArrayView2<f64>) -> Array2<f64> {
        self.pre_squash(states).mapv(f64::tanh)
    }
}

/// Q-network over the concatenation `[state, action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: Mlp,
}

impl QFunction for Critic {
    fn value(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
        let input = hcat(&[states, actions]);
        self.net.forward_batch(input.view()).column(0).to_owned()
    }
}

impl Critic {
    /// Weighted squared error over `set` and its parameter gradient.
    pub fn regression_loss(&self, set: &RegressionSet) -> (f64, Gradients) {
        let input = hcat(&[set.states.view(), set.actions.view()]);
        let trace = self.net.forward_trace(input.view());
        let err = &trace.output().column(0) - &set.targets;
        let loss = (&err * &err * &set.weights).sum();
        let upstream = (&err * &set.weights * 2.0).insert_axis(Axis(1));
        let (grads, _) = self.net.backward(&trace, upstream.view());
        (loss, grads)
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub critics: Vec<Critic>,
    pub target_critics: Vec<Critic>,
    pub policy: PolicyNet,
    critic_opts: Vec<Adam>,
    policy_opt: Adam,
    state_dim: usize,
    action_dim: usize,
    skipped_targets: u64,
}

impl Agent {
    pub fn new(state_dim: usize, action_dim: usize, config: AgentConfig, rng: &mut Rng) -> Self {
        assert!(config.num_critics >= 1, "need at least one critic");
        let critics: Vec<Critic> = (0..config.num_critics)
            .map(|_| Critic {
                net: Mlp::new(
                    &sizes(state_dim + action_dim, &config.critic_hidden, 1),
                    Activation::Relu,
                    Activation::Identity,
                    rng,
                ),
            })
            .collect();
        let mut net = Mlp::new(
            &sizes(state_dim, &config.policy_hidden, action_dim),
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        if let Some(last) = net.layers_mut().last_mut() {
            last.weight *= POLICY_OUTPUT_SCALE;
        }
        let policy = PolicyNet { net };
        Self::from_parts(state_dim, action_dim, config, critics, policy)
    }

    pub fn from_parts(
        state_dim: usize,
        action_dim: usize,
        config: AgentConfig,
        critics: Vec<Critic>,
        policy: PolicyNet,
    ) -> Self {
        let adam = AdamConfig::with_learning_rate(config.learning_rate);
        let critic_opts = critics.iter().map(|c| Adam::new(adam, &c.net)).collect();
        let policy_opt = Adam::new(adam, &policy.net);
        Self {
            config,
            target_critics: critics.clone(),
            critics,
            policy,
            critic_opts,
            policy_opt,
            state_dim,
            action_dim,
            skipped_targets: 0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Targets dropped so far because they were not finite.
    pub fn skipped_targets(&self) -> u64 {
        self.skipped_targets
    }

    /// Hard copy of every live critic into its frozen counterpart.
    pub fn refresh_targets(&mut self) {
        self.target_critics.clone_from(&self.critics);
    }

    /// One Adam step per critic on the mean squared error against targets.
    ///
    /// `batches[k]` is the minibatch of critic `k`. All targets are computed
    /// by `target_fn` before any critic moves, so they only see the frozen
    /// copies and the pre-update policy. Returns the mean loss over critics.
    pub fn critic_update<F>(
        &mut self,
        batches: &[Batch],
        mut target_fn: F,
    ) -> Result<f64, NumericsError>
    where
        F: FnMut(&Agent, &Batch) -> Array1<f64>,
    {
        assert_eq!(
            batches.len(),
            self.critics.len(),
            "one minibatch per critic"
        );
        let targets: Vec<Array1<f64>> = batches.iter().map(|b| target_fn(self, b)).collect();
        let sets: Vec<RegressionSet> = batches
            .iter()
            .zip(&targets)
            .map(|(b, t)| self.regression_rows(b, t))
            .collect();
        self.fit_critics(&sets)
    }

    fn regression_rows(&mut self, batch: &Batch, targets: &Array1<f64>) -> RegressionSet {
        let keep: Vec<usize> = (0..batch.len())
            .filter(|&i| targets[i].is_finite())
            .collect();
        self.skipped_targets += (batch.len() - keep.len()) as u64;
        let n = keep.len().max(1) as f64;
        RegressionSet {
            states: batch.states.select(Axis(0), &keep),
            actions: batch.actions.select(Axis(0), &keep),
            targets: targets.select(Axis(0), &keep),
            weights: Array1::from_elem(keep.len(), 1.0 / n),
            positions: vec![0; keep.len()],
        }
    }

    /// One Adam step per critic on its own weighted regression set.
    pub fn fit_critics(&mut self, sets: &[RegressionSet]) -> Result<f64, NumericsError> {
        assert_eq!(
            sets.len(),
            self.critics.len(),
            "one regression set per critic"
        );
        let mut total = 0.0;
        for ((critic, opt), set) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(sets) {
            if set.targets.is_empty() {
                continue;
            }
            let (loss, grads) = critic.regression_loss(set);
            opt.step(&mut critic.net, &grads)?;
            total += loss;
        }
        Ok(total / sets.len() as f64)
    }

    /// `-mean Q(s, pi(s))` and its gradient with respect to the policy.
    pub fn actor_loss_and_grad(&self, states: ArrayView2<f64>) -> (f64, Gradients) {
        let n = states.nrows() as f64;
        let trace = self.policy.net.forward_trace(states);
        let actions = trace.output().mapv(f64::tanh);
        let input = hcat(&[states, actions.view()]);
        let critics: &[Critic] = match self.config.actor_gradient {
            ActorGradient::FirstCritic => &self.critics[..1],
            ActorGradient::EnsembleMean => &self.critics,
        };
        let k = critics.len() as f64;
        let upstream = Array2::from_elem((states.nrows(), 1), -1.0 / (n * k));
        let mut loss = 0.0;
        let mut d_action = Array2::<f64>::zeros(actions.raw_dim());
        for c in critics {
            let ct = c.net.forward_trace(input.view());
            loss -= ct.output().sum() / (n * k);
            let (_, d_input) = c.net.backward(&ct, upstream.view());
            d_action += &d_input.slice(s![.., self.state_dim..]);
        }
        let d_pre = d_action * actions.mapv(|a| 1.0 - a * a);
        let (grads, _) = self.policy.net.backward(&trace, d_pre.view());
        (loss, grads)
    }

    pub fn actor_update(&mut self, states: ArrayView2<f64>) -> Result<f64, NumericsError> {
        let (loss, grads) = self.actor_loss_and_grad(states);
        self.policy_opt.step(&mut self.policy.net, &grads)?;
        Ok(loss)
    }

    /// Greedy action, or with probability `epsilon` (when exploring) the
    /// pre-squash output perturbed by Gaussian noise before squashing.
    pub fn select_action(
        &self,
        state: &[f64],
        explore: bool,
        rng: &mut Rng,
    ) -> Result<Vec<f64>, NumericsError> {
        if explore {
            self.policy
                .explore(state, self.config.epsilon, self.config.noise_scale, rng)
        } else {
            self.policy.action(state)
        }
    }
}
