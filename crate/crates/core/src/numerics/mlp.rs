//! Dense feedforward networks with reverse-mode gradients.
//!
//! Every layer computes `y = act(W x + b)` with `W` stored as an `out x in`
//! matrix. Batched entry points take row-major batches (`batch x features`);
//! shape mismatches on the batched paths are programmer errors and panic,
//! while the single-vector entry points report them as [`NumericsError`].

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// Shape `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediate values of a batched forward pass, kept for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient set shaped like an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    /// Number of non-finite entries and the first layer holding one.
    pub fn non_finite(&self) -> Option<(usize, usize)> {
        let mut count = 0;
        let mut first = None;
        for (i, l) in self.layers.iter().enumerate() {
            let c = l
                .weight
                .iter()
                .chain(l.bias.iter())
                .filter(|v| !v.is_finite())
                .count();
            if c > 0 && first.is_none() {
                first = Some(i);
            }
            count += c;
        }
        first.map(|f| (count, f))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&v| v == 0.0)
    }
}

impl Mlp {
    /// Builds a network with layer sizes `sizes[0] -> sizes[1] -> ...`.
    ///
    /// Rectified-linear layers use He-uniform initialization, all other
    /// layers a fan-in uniform bound of `sqrt(3 / fan_in)`. Biases start at 0.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(
            sizes.len() >= 2,
            "an MLP needs at least input and output sizes"
        );
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
                let activation = if k + 1 == n { output } else { hidden };
                let limit = match activation {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (3.0 / fan_in as f64).sqrt(),
                };
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bound");
                let weight = Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2);
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| Dense {
                weight: Array2::zeros((sizes[k + 1], sizes[k])),
                bias: Array1::zeros(sizes[k + 1]),
                activation: if k + 1 == n { output } else { hidden },
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NumericsError> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    /// Checks the layer chain and that every entry is finite.
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.layers.is_empty() {
            return Err(NumericsError::DimensionMismatch {
                context: "layer count",
                expected: 1,
                found: 0,
            });
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(NumericsError::DimensionMismatch {
                    context: "bias length",
                    expected: l.out_dim(),
                    found: l.bias.len(),
                });
            }
            if k > 0 && self.layers[k - 1].out_dim() != l.in_dim() {
                return Err(NumericsError::BrokenChain {
                    layer: k,
                    prev_out: self.layers[k - 1].out_dim(),
                    next_in: l.in_dim(),
                });
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFiniteParameter { layer: k });
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Overwrites all parameters from a flat vector in [`Mlp::flatten`] order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NumericsError> {
        if flat.len() != self.num_params() {
            return Err(NumericsError::DimensionMismatch {
                context: "flat parameter vector",
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    /// Euclidean distance between two identically shaped networks.
    pub fn distance(&self, other: &Mlp) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NumericsError> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        Ok(self.forward_batch(x).into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(input.ncols(), self.in_dim(), "network input width");
        let mut x = input.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.weight.t());
            z += &l.bias;
            z.mapv_inplace(|v| l.activation.apply(v));
            x = z;
        }
        x
    }

    pub fn forward_trace(&self, input: ArrayView2<f64>) -> Trace {
        assert_eq!(input.ncols(), self.in_dim(), "network input width");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.weight.t());
            z += &l.bias;
            let y = z.mapv(|v| l.activation.apply(v));
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        Trace {
            inputs,
            pre,
            output: x,
        }
    }

    /// Reverse-mode pass. `upstream` is dLoss/dOutput per batch row; the
    /// returned parameter gradients are summed over the batch, and the
    /// second value is dLoss/dInput per row.
    pub fn backward(&self, trace: &Trace, upstream: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        assert_eq!(
            upstream.dim(),
            trace.output.dim(),
            "upstream gradient shape"
        );
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        let mut y = &trace.output;
        for (k, l) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[k];
            ndarray::Zip::from(&mut delta)
                .and(z)
                .and(y)
                .for_each(|d, &zv, &yv| *d *= l.activation.derivative(zv, yv));
            let weight = delta.t().dot(&trace.inputs[k]);
            let bias = delta.sum_axis(Axis(0));
            grads.push(LayerGrad { weight, bias });
            delta = delta.dot(&l.weight);
            y = &trace.inputs[k];
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    /// Single-sample backward pass from scratch.
    pub fn backward_single(
        &self,
        input: &[f64],
        upstream: &[f64],
    ) -> Result<(Gradients, Vec<f64>), NumericsError> {
        self.check_input(input.len())?;
        if upstream.len() != self.out_dim() {
            return Err(NumericsError::DimensionMismatch {
                context: "upstream gradient",
                expected: self.out_dim(),
                found: upstream.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        let g = ArrayView2::from_shape((1, upstream.len()), upstream).expect("contiguous row");
        let trace = self.forward_trace(x);
        let (grads, dx) = self.backward(&trace, g);
        Ok((grads, dx.into_raw_vec_and_offset().0))
    }

    fn check_input(&self, len: usize) -> Result<(), NumericsError> {
        if len != self.in_dim() {
            return Err(NumericsError::DimensionMismatch {
                context: "network input",
                expected: self.in_dim(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Concatenates row blocks horizontally: `[a | b | ...]`.
pub fn hcat(parts: &[ArrayView2<f64>]) -> Array2<f64> {
    ndarray::concatenate(Axis(1), parts).expect("row counts agree")
}
