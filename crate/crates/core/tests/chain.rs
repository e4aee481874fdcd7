//! Candidate targets on the deterministic chain against brute-force returns.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use steve::env::{chain_reward, one_hot, ToyModel, CHAIN_STATES, CHAIN_TERMINAL};
use steve::numerics::seeded;
use steve::tabular::{toy_candidates, TabularQ};
use steve::value_expansion::{
    candidate_targets, combine, rollout, DynamicsModel, Policy, QFunction, RewardModel, Weighting,
    WeightingStrategy,
};
use steve::Batch;

/// Sum of rewards walking the chain from `i`: -1 per step, +100 on the last.
fn brute_return(i: usize) -> f64 {
    let mut total = 0.0;
    for k in i..100 {
        total += if k == 99 { 100.0 } else { -1.0 };
    }
    total
}

fn index(row: ArrayView1<f64>) -> usize {
    row.iter().position(|&v| v == 1.0).unwrap()
}

/// Exact chain model whose Q-values come from `table`.
struct Exact {
    table: Vec<f64>,
}

impl Policy for Exact {
    fn act(&self, states: ArrayView2<f64>) -> Array2<f64> {
        Array2::zeros((states.nrows(), 1))
    }
}

impl DynamicsModel for Exact {
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

impl RewardModel for Exact {
    fn reward(&self, s: ArrayView2<f64>, _: ArrayView2<f64>, s2: ArrayView2<f64>) -> Array1<f64> {
        s.rows()
            .into_iter()
            .zip(s2.rows())
            .map(|(a, b)| chain_reward(index(a), index(b)))
            .collect()
    }
}

impl QFunction for Exact {
    fn value(&self, states: ArrayView2<f64>, _: ArrayView2<f64>) -> Array1<f64> {
        states
            .rows()
            .into_iter()
            .map(|r| self.table[index(r)])
            .collect()
    }
}

fn transition(i: usize) -> Batch {
    Batch {
        states: Array2::from_shape_vec((1, CHAIN_STATES), one_hot(i, CHAIN_STATES)).unwrap(),
        actions: Array2::zeros((1, 1)),
        rewards: Array1::from_elem(1, chain_reward(i, i + 1)),
        next_states: Array2::from_shape_vec((1, CHAIN_STATES), one_hot(i + 1, CHAIN_STATES))
            .unwrap(),
        dones: Array1::from_elem(1, f64::from(i + 1 == CHAIN_TERMINAL)),
    }
}

fn true_values() -> Vec<f64> {
    (0..CHAIN_STATES)
        .map(|i| {
            if i == CHAIN_TERMINAL {
                0.0
            } else {
                brute_return(i)
            }
        })
        .collect()
}

#[test]
fn brute_force_values_are_one_above_the_index() {
    for i in 0..CHAIN_TERMINAL {
        assert_eq!(brute_return(i), i as f64 + 1.0);
    }
    assert_eq!(brute_return(0), -99.0 + 100.0);
}

#[test]
fn exact_candidates_equal_true_return_with_zero_variance() {
    let q = Exact {
        table: true_values(),
    };
    let models = [Exact { table: vec![] }, Exact { table: vec![] }];
    for i in 0..CHAIN_TERMINAL {
        let batch = transition(i);
        for horizon in [0, 1, 5, 10] {
            let bundle = rollout(
                &models,
                &q,
                batch.next_states.view(),
                batch.dones.view(),
                horizon,
                1.0,
            );
            let m = &candidate_targets(&bundle, &[&q], &[&q, &q], batch.rewards.view())[0];
            for h in 0..=horizon {
                assert!(
                    m.candidates(h).iter().all(|&c| c == brute_return(i)),
                    "s{i} H{horizon} h{h}"
                );
                assert_eq!(m.variances()[h], 0.0);
            }
            for kind in [Weighting::Td, Weighting::Mve, Weighting::Steve] {
                let target = combine(m, &WeightingStrategy::new(kind)).target;
                assert!((target - brute_return(i)).abs() < 1e-9, "{target}");
            }
        }
    }
}

#[test]
fn horizon_candidates_bootstrap_from_the_reached_state() {
    // Markers make every table entry identifiable.
    let markers: Vec<f64> = (0..CHAIN_STATES)
        .map(|i| {
            if i == CHAIN_TERMINAL {
                0.0
            } else {
                1000.0 * (i as f64 + 1.0)
            }
        })
        .collect();
    let q = Exact {
        table: markers.clone(),
    };
    let models = [Exact { table: vec![] }];
    let i = 40;
    let batch = transition(i);
    let bundle = rollout(
        &models,
        &q,
        batch.next_states.view(),
        batch.dones.view(),
        5,
        1.0,
    );
    let m = &candidate_targets(&bundle, &[&q], &[&q], batch.rewards.view())[0];
    for h in 0..=5 {
        // Real reward, h simulated rewards, then the table at s_{i+1+h}.
        let expected = -1.0 - h as f64 + markers[i + 1 + h];
        assert_eq!(m.candidates(h), &[expected][..], "h{h}");
    }
    // Five transitions in total land on s_{i+5}; the full H=5 rollout on s_{i+6}.
    assert_eq!(m.candidates(4)[0], -5.0 + markers[i + 5]);
    assert_eq!(m.candidates(5)[0], -6.0 + markers[i + 6]);
}

#[test]
fn rollouts_stop_collecting_at_the_terminal_state() {
    let q = Exact {
        table: true_values(),
    };
    let models = [Exact { table: vec![] }];
    for i in 95..CHAIN_TERMINAL {
        let batch = transition(i);
        let bundle = rollout(
            &models,
            &q,
            batch.next_states.view(),
            batch.dones.view(),
            10,
            1.0,
        );
        let m = &candidate_targets(&bundle, &[&q], &[&q], batch.rewards.view())[0];
        for h in 0..=10 {
            assert_eq!(m.candidates(h)[0], brute_return(i), "s{i} h{h}");
        }
    }
}

#[test]
fn toy_oracle_candidates_match_brute_force() {
    let tables = vec![TabularQ::from_values(true_values()); 8];
    let models = vec![ToyModel::oracle(); 8];
    let mut rng = seeded(0);
    for i in 0..CHAIN_TERMINAL {
        let m = toy_candidates(&tables, &models, i, 10, &mut rng);
        for h in 0..=10 {
            assert!(m.candidates(h).iter().all(|&c| c == brute_return(i)));
            assert_eq!(m.variances()[h], 0.0);
        }
    }
}

#[test]
fn toy_oracle_horizon_five_reads_the_table_five_states_ahead_of_the_successor() {
    let markers: Vec<f64> = (0..CHAIN_STATES).map(|i| 1000.0 * i as f64).collect();
    let tables = vec![TabularQ::from_values(markers.clone())];
    let models = vec![ToyModel::oracle()];
    let i = 10;
    let m = toy_candidates(&tables, &models, i, 5, &mut seeded(1));
    assert_eq!(m.candidates(4)[0], -5.0 + markers[i + 5]);
    assert_eq!(m.candidates(5)[0], -6.0 + markers[i + 6]);
}
