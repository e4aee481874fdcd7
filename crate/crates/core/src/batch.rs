use ndarray::{Array1, Array2};

use crate::env::Transition;

/// Column-stacked minibatch of transitions, one row per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 where the next state is terminal.
    pub dones: Array1<f64>,
}

impl Batch {
    /// Panics on an empty slice or ragged dimensions.
    pub fn from_transitions<'a, I>(transitions: I) -> Self
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let items: Vec<&Transition> = transitions.into_iter().collect();
        assert!(!items.is_empty(), "empty batch");
        let (sd, ad) = (items[0].state.len(), items[0].action.len());
        let n = items.len();
        let mut states = Array2::zeros((n, sd));
        let mut actions = Array2::zeros((n, ad));
        let mut next_states = Array2::zeros((n, sd));
        let mut rewards = Array1::zeros(n);
        let mut dones = Array1::zeros(n);
        for (i, t) in items.iter().enumerate() {
            assert_eq!(t.state.len(), sd, "ragged state");
            assert_eq!(t.action.len(), ad, "ragged action");
            states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.state[..]));
            actions
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.action[..]));
            next_states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.next_state[..]));
            rewards[i] = t.reward;
            dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        Self {
            states,
            actions,
            rewards,
            next_states,
            dones,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            state: self.states.row(i).to_vec(),
            action: self.actions.row(i).to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states.row(i).to_vec(),
            done: self.dones[i] > 0.5,
        }
    }
}
