//! Independent reference implementations shared by the integration tests.
//!
//! Everything here recomputes quantities with plain loops over the raw
//! parameters, without calling the library's forward or backward passes.

#![allow(dead_code)]

use std::cell::RefCell;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use steve::agent::{ActorGradient, Agent, AgentConfig, Critic, PolicyNet};
use steve::numerics::{seeded, Activation, Mlp, Rng};
use steve::value_expansion::{rollout, tdk_regression_set, RegressionSet};
use steve::world_model::{
    model_loss, Dynamics, RewardNet, WorldModel, WorldModelConfig, TERMINATION_CLAMP,
};
use steve::Batch;

thread_local! {
    static PATTERN: RefCell<Option<Vec<bool>>> = const { RefCell::new(None) };
}

fn apply(activation: Activation, z: f64) -> f64 {
    match activation {
        Activation::Identity => z,
        Activation::Relu => {
            PATTERN.with(|p| {
                if let Some(v) = p.borrow_mut().as_mut() {
                    v.push(z > 0.0);
                }
            });
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::Tanh => z.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
    }
}

/// Forward pass written out as explicit sums.
pub fn forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for layer in net.layers() {
        let (rows, cols) = layer.weight.dim();
        assert_eq!(cols, h.len());
        h = (0..rows)
            .map(|i| {
                let mut z = layer.bias[i];
                for (j, hj) in h.iter().enumerate() {
                    z += layer.weight[[i, j]] * hj;
                }
                apply(layer.activation, z)
            })
            .collect();
    }
    h
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn recorded<F: Fn() -> f64>(f: F) -> (f64, Vec<bool>) {
    PATTERN.with(|p| *p.borrow_mut() = Some(Vec::new()));
    let v = f();
    let pattern = PATTERN.with(|p| p.borrow_mut().take().unwrap());
    (v, pattern)
}

/// Central differences of `loss` over the flat parameters of `net`.
///
/// When a perturbation flips a ReLU, the one-sided difference from the side
/// that keeps the unperturbed activation pattern is used instead.
pub fn numeric_grad<F: Fn(&Mlp) -> f64>(net: &Mlp, loss: F) -> Vec<f64> {
    let h = 1e-6;
    let theta = net.flatten();
    let mut probe = net.clone();
    let (f0, p0) = recorded(|| loss(net));
    (0..theta.len())
        .map(|i| {
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            probe.set_flat(&t).unwrap();
            let (fp, pp) = recorded(|| loss(&probe));
            t[i] = theta[i] - h;
            probe.set_flat(&t).unwrap();
            let (fm, pm) = recorded(|| loss(&probe));
            match (pp == p0, pm == p0) {
                (true, true) | (false, false) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - f0) / h,
                (false, true) => (f0 - fm) / h,
            }
        })
        .collect()
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

pub fn random_batch(rng: &mut Rng, n: usize, sd: usize, ad: usize) -> Batch {
    Batch {
        states: random_matrix(rng, n, sd, 1.0),
        actions: random_matrix(rng, n, ad, 1.0),
        rewards: Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0)),
        next_states: random_matrix(rng, n, sd, 1.0),
        dones: Array1::from_shape_fn(n, |_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }),
    }
}

fn relu_net(rng: &mut Rng, sizes: &[usize]) -> Mlp {
    Mlp::new(sizes, Activation::Relu, Activation::Identity, rng)
}

/// Analytic-vs-numeric error of the weighted critic regression gradient.
pub fn critic_case(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let (sd, ad, n) = (3, 2, 6);
    let critic = Critic {
        net: relu_net(&mut rng, &[sd + ad, 7, 5, 1]),
    };
    let set = RegressionSet {
        states: random_matrix(&mut rng, n, sd, 1.0),
        actions: random_matrix(&mut rng, n, ad, 1.0),
        targets: Array1::from_shape_fn(n, |_| rng.random_range(-3.0..3.0)),
        weights: Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0)),
        positions: vec![0; n],
    };
    let oracle = |net: &Mlp| -> f64 {
        (0..n)
            .map(|k| {
                let x = cat(&[
                    set.states.row(k).as_slice().unwrap(),
                    set.actions.row(k).as_slice().unwrap(),
                ]);
                let e = forward(net, &x)[0] - set.targets[k];
                set.weights[k] * e * e
            })
            .sum()
    };
    let (loss, grads) = critic.regression_loss(&set);
    assert!((loss - oracle(&critic.net)).abs() <= 1e-10 * loss.abs().max(1.0));
    rel_error(&grads.flatten(), &numeric_grad(&critic.net, oracle))
}

/// Analytic-vs-numeric error of the deterministic policy gradient.
pub fn actor_case(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let (sd, ad, n) = (3, 2, 5);
    let config = AgentConfig {
        critic_hidden: vec![6, 5],
        policy_hidden: vec![6],
        num_critics: 3,
        actor_gradient: if seed.is_multiple_of(2) {
            ActorGradient::FirstCritic
        } else {
            ActorGradient::EnsembleMean
        },
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(sd, ad, config, &mut rng);
    // Move the policy off its near-linear start so tanh curvature matters.
    let policy = relu_net(&mut rng, &[sd, 6, ad]);
    agent.policy = PolicyNet { net: policy };
    let states = random_matrix(&mut rng, n, sd, 1.5);
    let used = match agent.config.actor_gradient {
        ActorGradient::FirstCritic => 1,
        ActorGradient::EnsembleMean => agent.critics.len(),
    };
    let critics: Vec<Mlp> = agent.critics[..used]
        .iter()
        .map(|c| c.net.clone())
        .collect();
    let oracle = |net: &Mlp| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let s = states.row(i).to_vec();
            let a: Vec<f64> = forward(net, &s).into_iter().map(f64::tanh).collect();
            for c in &critics {
                total += forward(c, &cat(&[&s, &a]))[0];
            }
        }
        -total / (n * critics.len()) as f64
    };
    let (loss, grads) = agent.actor_loss_and_grad(states.view());
    assert!((loss - oracle(&agent.policy.net)).abs() <= 1e-10 * loss.abs().max(1.0));
    rel_error(&grads.flatten(), &numeric_grad(&agent.policy.net, oracle))
}

fn model_oracle(transition: &Mlp, termination: &Mlp, reward: &Mlp, batch: &Batch) -> f64 {
    let n = batch.len();
    let mut total = 0.0;
    for i in 0..n {
        let s = batch.states.row(i).to_vec();
        let a = batch.actions.row(i).to_vec();
        let s2 = batch.next_states.row(i).to_vec();
        let delta = forward(transition, &cat(&[&s, &a]));
        let predicted: Vec<f64> = s.iter().zip(&delta).map(|(x, d)| x + d).collect();
        total += predicted
            .iter()
            .zip(&s2)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>();
        let p = sigmoid(forward(termination, &predicted)[0])
            .clamp(TERMINATION_CLAMP, 1.0 - TERMINATION_CLAMP);
        let d = batch.dones[i];
        total -= d * p.ln() + (1.0 - d) * (1.0 - p).ln();
        total += (forward(reward, &cat(&[&s, &a, &s2]))[0] - batch.rewards[i]).powi(2);
    }
    total / n as f64
}

/// Analytic-vs-numeric error of the model loss over all three networks.
pub fn model_case(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let (sd, ad, n) = (3, 2, 6);
    let config = WorldModelConfig {
        transition_hidden: vec![7, 5],
        termination_hidden: vec![5],
        reward_hidden: vec![6],
        learning_rate: 1e-3,
    };
    let model = WorldModel::new(sd, ad, &config, &mut rng);
    let batch = random_batch(&mut rng, n, sd, ad);
    let (loss, dyn_grads, rew_grads) = model_loss(&model, &batch).unwrap();
    let (t, d, r) = (
        &model.dynamics.transition,
        &model.dynamics.termination,
        &model.reward.net,
    );
    let reference = model_oracle(t, d, r, &batch);
    assert!((loss.total() - reference).abs() <= 1e-10 * reference.abs().max(1.0));
    let analytic = cat(&[
        &dyn_grads.transition.flatten(),
        &dyn_grads.termination.flatten(),
        &rew_grads.flatten(),
    ]);
    let numeric = cat(&[
        &numeric_grad(t, |net| model_oracle(net, d, r, &batch)),
        &numeric_grad(d, |net| model_oracle(t, net, r, &batch)),
        &numeric_grad(r, |net| model_oracle(t, d, net, &batch)),
    ]);
    rel_error(&analytic, &numeric)
}

/// TD-k loss of `critic` recomputed from scratch: hand-rolled rollouts,
/// targets averaged over reward and target-Q ensembles, `1 / H` scaling.
#[allow(clippy::too_many_arguments)]
fn tdk_oracle(
    critic: &Mlp,
    policy: &Mlp,
    dynamics: &[Dynamics],
    rewards: &[RewardNet],
    targets: &[Critic],
    batch: &Batch,
    horizon: usize,
    gamma: f64,
) -> f64 {
    let act = |s: &[f64]| -> Vec<f64> { forward(policy, s).into_iter().map(f64::tanh).collect() };
    let q = |net: &Mlp, s: &[f64], a: &[f64]| forward(net, &cat(&[s, a]))[0];
    let n = batch.len();
    let mut real_term = 0.0;
    let mut model_term = 0.0;
    for i in 0..n {
        let mut head = 0.0;
        for dm in dynamics {
            let mut states = vec![batch.next_states.row(i).to_vec()];
            let mut actions = vec![act(&states[0])];
            let mut cont = vec![1.0];
            for p in 0..horizon {
                let delta = forward(&dm.transition, &cat(&[&states[p], &actions[p]]));
                let next: Vec<f64> = states[p].iter().zip(&delta).map(|(x, d)| x + d).collect();
                let pd = sigmoid(forward(&dm.termination, &next)[0])
                    .clamp(TERMINATION_CLAMP, 1.0 - TERMINATION_CLAMP);
                cont.push(1.0 - pd);
                actions.push(act(&next));
                states.push(next);
            }
            let mut v = targets
                .iter()
                .map(|t| q(&t.net, &states[horizon], &actions[horizon]))
                .sum::<f64>()
                / targets.len() as f64;
            let mut per_pos = vec![0.0; horizon];
            for p in (0..horizon).rev() {
                let r = rewards
                    .iter()
                    .map(|rm| forward(&rm.net, &cat(&[&states[p], &actions[p], &states[p + 1]]))[0])
                    .sum::<f64>()
                    / rewards.len() as f64;
                v = r + gamma * cont[p + 1] * v;
                per_pos[p] = v;
            }
            head += per_pos[0];
            for p in 0..horizon {
                model_term += (q(critic, &states[p], &actions[p]) - per_pos[p]).powi(2);
            }
        }
        head /= dynamics.len() as f64;
        let target = batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * head;
        let s = batch.states.row(i).to_vec();
        let a = batch.actions.row(i).to_vec();
        real_term += (q(critic, &s, &a) - target).powi(2);
    }
    (real_term / n as f64 + model_term / (n * dynamics.len()) as f64) / horizon as f64
}

/// Analytic-vs-numeric error of the TD-k critic gradient.
pub fn tdk_case(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let (sd, ad, n) = (3, 2, 4);
    let horizon = 1 + (seed % 3) as usize;
    let gamma = 0.9;
    let config = WorldModelConfig {
        transition_hidden: vec![5],
        termination_hidden: vec![4],
        reward_hidden: vec![5],
        learning_rate: 1e-3,
    };
    let dynamics: Vec<Dynamics> = (0..2)
        .map(|_| Dynamics::new(sd, ad, &config, &mut rng))
        .collect();
    let rewards: Vec<RewardNet> = (0..2)
        .map(|_| RewardNet::new(sd, ad, &config, &mut rng))
        .collect();
    let targets: Vec<Critic> = (0..2)
        .map(|_| Critic {
            net: relu_net(&mut rng, &[sd + ad, 5, 1]),
        })
        .collect();
    let critic = Critic {
        net: relu_net(&mut rng, &[sd + ad, 6, 4, 1]),
    };
    let policy = PolicyNet {
        net: relu_net(&mut rng, &[sd, 5, ad]),
    };
    let batch = random_batch(&mut rng, n, sd, ad);
    let bundle = rollout(
        &dynamics,
        &policy,
        batch.next_states.view(),
        batch.dones.view(),
        horizon,
        gamma,
    );
    let set = tdk_regression_set(&bundle, &batch, &rewards, &targets);
    let (loss, grads) = critic.regression_loss(&set);
    let oracle = |net: &Mlp| {
        tdk_oracle(
            net,
            &policy.net,
            &dynamics,
            &rewards,
            &targets,
            &batch,
            horizon,
            gamma,
        )
    };
    let reference = oracle(&critic.net);
    assert!(
        (loss - reference).abs() <= 1e-10 * reference.abs().max(1.0),
        "TD-k loss {loss} vs oracle {reference}"
    );
    rel_error(&grads.flatten(), &numeric_grad(&critic.net, oracle))
}

/// Worst error over `cases` seeded cases.
pub fn worst<F: Fn(u64) -> f64>(cases: u64, case: F) -> f64 {
    (0..cases).map(|i| case(10_000 + i)).fold(0.0, f64::max)
}

/// Chain value by walking the chain and summing rewards.
pub fn chain_return(from: usize) -> f64 {
    let mut s = from;
    let mut total = 0.0;
    while s < 100 {
        total += if s == 99 { 100.0 } else { -1.0 };
        s += 1;
    }
    total
}

/// Inverse-variance weights written directly: `w_i = (1/v_i) / sum_j (1/v_j)`.
pub fn reference_steve_weights(variances: &[f64], floor: f64) -> Vec<f64> {
    let inv: Vec<f64> = variances.iter().map(|v| 1.0 / v.max(floor)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|w| w / total).collect()
}

/// `sum_i w_i^2 v_i`, the variance of the weighted combination of independent candidates.
pub fn weighted_variance(weights: &[f64], variances: &[f64]) -> f64 {
    weights.iter().zip(variances).map(|(w, v)| w * w * v).sum()
}

/// Uniform sample from the probability simplex of dimension `k`.
pub fn simplex_sample(rng: &mut Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}
