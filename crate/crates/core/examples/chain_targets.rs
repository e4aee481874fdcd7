//! Candidate targets on the chain with exact models and true values.
//!
//! Every horizon reproduces the brute-force return, so each strategy
//! returns the same target and STEVE sees zero variance everywhere.
//!
//! `cargo run --release --example chain_targets -- [state] [horizon]`

use ndarray::{Array1, Array2, ArrayView2};
use steve::env::{one_hot, true_chain_value, CHAIN_STATES, CHAIN_TERMINAL};
use steve::value_expansion::{
    candidate_targets, combine, rollout, DynamicsModel, Policy, QFunction, RewardModel, Weighting,
    WeightingStrategy,
};
use steve::Batch;

fn index(row: ndarray::ArrayView1<f64>) -> usize {
    row.iter().position(|&v| v == 1.0).expect("one-hot row")
}

struct Advance;

impl Policy for Advance {
    fn act(&self, states: ArrayView2<f64>) -> Array2<f64> {
        Array2::zeros((states.nrows(), 1))
    }
}

impl DynamicsModel for Advance {
    fn predict(&self, states: ArrayView2<f64>, _: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
        let mut next = Array2::zeros(states.raw_dim());
        let mut done = Array1::zeros(states.nrows());
        for (r, row) in states.rows().into_iter().enumerate() {
            let j = (index(row) + 1).min(CHAIN_TERMINAL);
            next[[r, j]] = 1.0;
            done[r] = f64::from(j == CHAIN_TERMINAL);
        }
        (next, done)
    }
}

impl RewardModel for Advance {
    fn reward(&self, s: ArrayView2<f64>, _: ArrayView2<f64>, s2: ArrayView2<f64>) -> Array1<f64> {
        s.rows()
            .into_iter()
            .zip(s2.rows())
            .map(|(a, b)| steve::env::chain_reward(index(a), index(b)))
            .collect()
    }
}

impl QFunction for Advance {
    fn value(&self, states: ArrayView2<f64>, _: ArrayView2<f64>) -> Array1<f64> {
        states
            .rows()
            .into_iter()
            .map(|r| true_chain_value(index(r)).unwrap_or(0.0))
            .collect()
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let state: usize = args.next().map_or(90, |a| a.parse().expect("state"));
    let horizon: usize = args.next().map_or(5, |a| a.parse().expect("horizon"));
    assert!(state < CHAIN_TERMINAL, "state must be nonterminal");
    let next = state + 1;
    let batch = Batch {
        states: Array2::from_shape_vec((1, CHAIN_STATES), one_hot(state, CHAIN_STATES)).unwrap(),
        actions: Array2::zeros((1, 1)),
        rewards: Array1::from_elem(1, steve::env::chain_reward(state, next)),
        next_states: Array2::from_shape_vec((1, CHAIN_STATES), one_hot(next, CHAIN_STATES))
            .unwrap(),
        dones: Array1::from_elem(1, f64::from(next == CHAIN_TERMINAL)),
    };
    let models = [Advance, Advance];
    let bundle = rollout(
        &models,
        &Advance,
        batch.next_states.view(),
        batch.dones.view(),
        horizon,
        1.0,
    );
    let matrix = &candidate_targets(
        &bundle,
        &[Advance],
        &[Advance, Advance],
        batch.rewards.view(),
    )[0];
    println!(
        "true value of s{state}: {}",
        true_chain_value(state).unwrap()
    );
    for i in 0..=horizon {
        println!(
            "  horizon {i}: mean {:.1}, variance {:.1}",
            matrix.means()[i],
            matrix.variances()[i]
        );
    }
    for kind in [Weighting::Td, Weighting::Mve, Weighting::Steve] {
        let c = combine(matrix, &WeightingStrategy::new(kind));
        println!("{:<6} target {:.1}", kind.name(), c.target);
    }
}
