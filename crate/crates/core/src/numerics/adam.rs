use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Mlp) -> Self {
        Self {
            config,
            step: 0,
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update. Non-finite gradients leave
    /// both the parameters and the optimizer state untouched.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<(), NumericsError> {
        if grads.layers.len() != params.layers().len() {
            return Err(NumericsError::DimensionMismatch {
                context: "gradient layer count",
                expected: params.layers().len(),
                found: grads.layers.len(),
            });
        }
        for (l, g) in params.layers().iter().zip(&grads.layers) {
            if l.weight.dim() != g.weight.dim() || l.bias.len() != g.bias.len() {
                return Err(NumericsError::DimensionMismatch {
                    context: "gradient shape",
                    expected: l.weight.len() + l.bias.len(),
                    found: g.weight.len() + g.bias.len(),
                });
            }
        }
        if let Some((count, first_layer)) = grads.non_finite() {
            return Err(NumericsError::NonFiniteGradient { count, first_layer });
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };

        for (k, layer) in params.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[k];
            let (m, v) = (&mut self.first.layers[k], &mut self.second.layers[k]);
            ndarray::Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mlp::{Activation, Dense};
    use crate::numerics::rng::seeded;
    use ndarray::array;

    fn scalar_net(p: f64) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: array![[p]],
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; bias-corrected m_hat = 1, v_hat = 1,
        // so the step is lr / (1 + eps).
        let mut net = scalar_net(0.0);
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.1), &net);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].weight[[0, 0]] = 1.0;
        adam.step(&mut net, &grads).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((net.layers()[0].weight[[0, 0]] - expected).abs() < 1e-15);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let mut rng = seeded(1);
        let mut net = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let before = net.clone();
        let mut adam = Adam::new(AdamConfig::default(), &net);
        let zero = Gradients::zeros_like(&net);
        for k in 1..=25 {
            adam.step(&mut net, &zero).unwrap();
            assert_eq!(adam.steps(), k);
        }
        assert_eq!(net, before);
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut net = scalar_net(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &net);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].bias[0] = f64::NAN;
        let err = adam.step(&mut net, &grads).unwrap_err();
        assert_eq!(
            err,
            NumericsError::NonFiniteGradient {
                count: 1,
                first_layer: 0
            }
        );
        assert_eq!(adam.steps(), 0);
        assert_eq!(net, scalar_net(1.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = scalar_net(1.0);
        let other = Mlp::zeros(&[2, 1], Activation::Relu, Activation::Identity);
        let mut adam = Adam::new(AdamConfig::default(), &net);
        assert!(adam.step(&mut net, &Gradients::zeros_like(&other)).is_err());
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut rng = seeded(42);
            let mut net = Mlp::new(&[2, 8, 1], Activation::Relu, Activation::Identity, &mut rng);
            let mut adam = Adam::new(AdamConfig::default(), &net);
            for i in 0..50 {
                let x = [i as f64 * 0.1, 1.0 - i as f64 * 0.05];
                let y = net.forward(&x).unwrap()[0];
                let (g, _) = net.backward_single(&x, &[2.0 * (y - 1.0)]).unwrap();
                adam.step(&mut net, &g).unwrap();
            }
            net.flatten()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
