//! Value-expansion targets.
//!
//! A learned model is rolled out from the real next state, every rollout
//! prefix yields a candidate target, and a [`WeightingStrategy`] folds the
//! per-horizon candidate statistics into one regression target. TD, MVE,
//! uniform averaging, TD(lambda)-style decay and inverse-variance (STEVE)
//! weighting are all strategies over the same candidate matrix.

mod rollout;
mod targets;
mod tdk;
mod weighting;

pub use rollout::{rollout, RolloutBundle};
pub use targets::{candidate_targets, CandidateTargetMatrix};
pub use tdk::{tdk_losses, tdk_regression_set, RegressionSet};
pub use weighting::{combine, Combined, Weighting, WeightingStrategy, DEFAULT_VARIANCE_FLOOR};

use ndarray::{Array1, Array2, ArrayView2};

use crate::batch::Batch;
use crate::env::Transition;

/// Deterministic policy evaluated on a batch of states.
pub trait Policy {
    fn act(&self, states: ArrayView2<f64>) -> Array2<f64>;
}

/// Learned dynamics: `(next states, termination probability of each next state)`.
pub trait DynamicsModel {
    fn predict(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> (Array2<f64>, Array1<f64>);
}

pub trait RewardModel {
    fn reward(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        next_states: ArrayView2<f64>,
    ) -> Array1<f64>;
}

pub trait QFunction {
    fn value(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64>;
}

impl<T: Policy + ?Sized> Policy for &T {
    fn act(&self, states: ArrayView2<f64>) -> Array2<f64> {
        (**self).act(states)
    }
}

impl<T: DynamicsModel + ?Sized> DynamicsModel for &T {
    fn predict(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> (Array2<f64>, Array1<f64>) {
        (**self).predict(states, actions)
    }
}

impl<T: RewardModel + ?Sized> RewardModel for &T {
    fn reward(&self, s: ArrayView2<f64>, a: ArrayView2<f64>, s2: ArrayView2<f64>) -> Array1<f64> {
        (**self).reward(s, a, s2)
    }
}

impl<T: QFunction + ?Sized> QFunction for &T {
    fn value(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
        (**self).value(states, actions)
    }
}

/// One-step TD targets `r + gamma (1 - d) Q(s', pi(s'))`, averaged over the
/// Q ensemble. Computed directly, without going through a rollout.
pub fn td_targets<Q: QFunction, P: Policy>(
    batch: &Batch,
    qs: &[Q],
    policy: &P,
    gamma: f64,
) -> Array1<f64> {
    assert!(!qs.is_empty(), "need at least one Q-function");
    let next_actions = policy.act(batch.next_states.view());
    let mut mean_q = Array1::<f64>::zeros(batch.len());
    for q in qs {
        mean_q += &q.value(batch.next_states.view(), next_actions.view());
    }
    mean_q /= qs.len() as f64;
    &batch.rewards + &(mean_q * batch.dones.mapv(|d| gamma * (1.0 - d)))
}

/// Rollout, candidate targets and combination for every row of `batch`.
#[allow(clippy::too_many_arguments)]
pub fn expansion_targets<D, R, Q, P>(
    batch: &Batch,
    models: &[D],
    rewards: &[R],
    qs: &[Q],
    policy: &P,
    horizon: usize,
    gamma: f64,
    strategy: &WeightingStrategy,
) -> Vec<Combined>
where
    D: DynamicsModel,
    R: RewardModel,
    Q: QFunction,
    P: Policy,
{
    let bundle = rollout(
        models,
        policy,
        batch.next_states.view(),
        batch.dones.view(),
        horizon,
        gamma,
    );
    candidate_targets(&bundle, rewards, qs, batch.rewards.view())
        .iter()
        .map(|m| combine(m, strategy))
        .collect()
}

/// STEVE target for a single transition.
pub fn steve_target<D, R, Q, P>(
    transition: &Transition,
    models: &[D],
    rewards: &[R],
    qs: &[Q],
    policy: &P,
    horizon: usize,
    gamma: f64,
) -> f64
where
    D: DynamicsModel,
    R: RewardModel,
    Q: QFunction,
    P: Policy,
{
    let batch = Batch::from_transitions(std::iter::once(transition));
    let strategy = WeightingStrategy::new(Weighting::Steve);
    expansion_targets(
        &batch, models, rewards, qs, policy, horizon, gamma, &strategy,
    )[0]
    .target
}

/// Mean probability mass placed on horizons that use at least one model step.
pub fn model_usage<W: AsRef<[f64]>>(weights: &[W]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    weights.iter().map(|w| 1.0 - w.as_ref()[0]).sum::<f64>() / weights.len() as f64
}
