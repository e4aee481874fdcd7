//! Training the critic on every intermediate rollout state.

use ndarray::{concatenate, Array1, Array2, Axis};

use super::{QFunction, RewardModel, RolloutBundle};
use crate::batch::Batch;

/// Rows for a weighted squared-error critic fit: the loss is
/// `sum_rows weight * (Q(state, action) - target)^2`.
#[derive(Debug, Clone)]
pub struct RegressionSet {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub targets: Array1<f64>,
    pub weights: Array1<f64>,
    /// Rollout position of each row; `0` stands for the real transition
    /// (`s'_{-1} = s`) and `p + 1` for model state `s'_p`.
    pub positions: Vec<usize>,
}

/// Builds the TD-k regression rows for a rollout of `batch`.
///
/// Position `-1` is the real `(s, a)` with the full `H`-step target; model
/// position `p` in `0..H` is `(s'_p, a'_p)` with the target formed by the
/// remaining `H - p - 1` model steps and the bootstrap at `s'_H`. Targets
/// average over the reward and Q ensembles, model positions are averaged
/// over the dynamics ensemble, and the whole sum is scaled by `1 / H`.
pub fn tdk_regression_set<R: RewardModel, Q: QFunction>(
    bundle: &RolloutBundle,
    batch: &Batch,
    rewards: &[R],
    target_qs: &[Q],
) -> RegressionSet {
    let h = bundle.horizon;
    assert!(h >= 1, "TD-k needs a positive horizon");
    assert!(!rewards.is_empty() && !target_qs.is_empty());
    let b = batch.len();
    let m_count = bundle.num_models();
    let gamma = bundle.gamma;

    // values[m][p]: averaged target at model position p (= V_p), p in 0..H.
    let mut values: Vec<Vec<Array1<f64>>> = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let s = &bundle.states[m];
        let a = &bundle.actions[m];
        let c = &bundle.continuation[m];
        let mut v = Array1::<f64>::zeros(b);
        for q in target_qs {
            v += &q.value(s[h].view(), a[h].view());
        }
        v /= target_qs.len() as f64;
        let mut per_pos = vec![Array1::zeros(b); h];
        for p in (0..h).rev() {
            let mut r = Array1::<f64>::zeros(b);
            for rm in rewards {
                r += &rm.reward(s[p].view(), a[p].view(), s[p + 1].view());
            }
            r /= rewards.len() as f64;
            v = r + &(&c[p + 1] * &v) * gamma;
            per_pos[p] = v.clone();
        }
        values.push(per_pos);
    }

    let mut head = Array1::<f64>::zeros(b);
    for per_pos in &values {
        head += &per_pos[0];
    }
    head /= m_count as f64;
    let real_targets = &batch.rewards + &(&bundle.continuation[0][0] * &head) * gamma;

    let mut states = vec![batch.states.view()];
    let mut actions = vec![batch.actions.view()];
    let mut targets = vec![real_targets.view()];
    let mut weights = vec![Array1::from_elem(b, 1.0 / (h * b) as f64)];
    let mut positions = vec![0usize; b];
    let model_weight = 1.0 / (h * b * m_count) as f64;
    for m in 0..m_count {
        for p in 0..h {
            states.push(bundle.states[m][p].view());
            actions.push(bundle.actions[m][p].view());
            targets.push(values[m][p].view());
            weights.push(Array1::from_elem(b, model_weight));
            positions.extend(std::iter::repeat_n(p + 1, b));
        }
    }
    let weight_views: Vec<_> = weights.iter().map(|w| w.view()).collect();
    RegressionSet {
        states: concatenate(Axis(0), &states).expect("state widths agree"),
        actions: concatenate(Axis(0), &actions).expect("action widths agree"),
        targets: concatenate(Axis(0), &targets).expect("1-d"),
        weights: concatenate(Axis(0), &weight_views).expect("1-d"),
        positions,
    }
}

/// Per-position TD-k loss terms for `critic`, index 0 being the real
/// transition. Each term is the batch (and model) mean squared error; the
/// TD-k loss is their sum divided by `H`.
pub fn tdk_losses<R: RewardModel, Q: QFunction, C: QFunction>(
    bundle: &RolloutBundle,
    batch: &Batch,
    rewards: &[R],
    target_qs: &[Q],
    critic: &C,
) -> Vec<f64> {
    let set = tdk_regression_set(bundle, batch, rewards, target_qs);
    let pred = critic.value(set.states.view(), set.actions.view());
    let h = bundle.horizon as f64;
    let mut terms = vec![0.0; bundle.horizon + 1];
    for (k, &p) in set.positions.iter().enumerate() {
        let e = pred[k] - set.targets[k];
        // Row weights carry 1 / H; undo it so terms are plain means.
        terms[p] += set.weights[k] * h * e * e;
    }
    terms
}
