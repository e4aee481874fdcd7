use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{DynamicsModel, Policy};

/// Model rollouts from a batch of real next states.
///
/// Indexing follows the rollout: position `i` holds `s'_i` and `a'_i =
/// pi(s'_i)`, with `s'_0` the real next state. `continuation[m][0]` is
/// `1 - d(s')` from the real transition and `continuation[m][i]` for
/// `i >= 1` is `1 - d_hat(s'_i)` under model `m`.
#[derive(Debug, Clone)]
pub struct RolloutBundle {
    pub horizon: usize,
    pub gamma: f64,
    pub states: Vec<Vec<Array2<f64>>>,
    pub actions: Vec<Vec<Array2<f64>>>,
    pub continuation: Vec<Vec<Array1<f64>>>,
}

impl RolloutBundle {
    pub fn num_models(&self) -> usize {
        self.states.len()
    }

    pub fn batch_len(&self) -> usize {
        self.states[0][0].nrows()
    }

    /// Survival products `D^0 ..= D^H` for model `m`; `D^i` multiplies the
    /// continuation factors of positions `0..=i` and is non-increasing.
    pub fn survival(&self, m: usize) -> Vec<Array1<f64>> {
        let mut out: Vec<Array1<f64>> = Vec::with_capacity(self.horizon + 1);
        for c in &self.continuation[m] {
            let next = match out.last() {
                Some(prev) => prev * c,
                None => c.clone(),
            };
            out.push(next);
        }
        out
    }
}

/// Rolls every model `horizon` steps from `next_states`.
///
/// With `horizon == 0` no model is queried and the bundle holds a single
/// rollout containing only `s'_0`; `models` may then be empty.
pub fn rollout<D: DynamicsModel, P: Policy>(
    models: &[D],
    policy: &P,
    next_states: ArrayView2<f64>,
    dones: ArrayView1<f64>,
    horizon: usize,
    gamma: f64,
) -> RolloutBundle {
    assert!(
        horizon == 0 || !models.is_empty(),
        "a positive horizon needs at least one model"
    );
    let start_cont = dones.mapv(|d| 1.0 - d);
    let start_action = policy.act(next_states);
    let count = if horizon == 0 { 1 } else { models.len() };

    let mut states = Vec::with_capacity(count);
    let mut actions = Vec::with_capacity(count);
    let mut continuation = Vec::with_capacity(count);
    for m in 0..count {
        let mut s = vec![next_states.to_owned()];
        let mut a = vec![start_action.clone()];
        let mut c = vec![start_cont.clone()];
        for i in 1..=horizon {
            let (next, term) = models[m].predict(s[i - 1].view(), a[i - 1].view());
            a.push(policy.act(next.view()));
            s.push(next);
            c.push(term.mapv(|p| 1.0 - p));
        }
        states.push(s);
        actions.push(a);
        continuation.push(c);
    }
    RolloutBundle {
        horizon,
        gamma,
        states,
        actions,
        continuation,
    }
}
