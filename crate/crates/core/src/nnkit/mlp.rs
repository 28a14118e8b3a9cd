use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::tensor::DenseTensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Silu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    fn on_tape(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(v),
            Activation::Silu => tape.silu(v),
            Activation::Identity => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[out x in]`
    pub weight: DenseTensor,
    /// `[out]`
    pub bias: DenseTensor,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Parameters of a feedforward network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub layers: Vec<Layer>,
}

/// Gradients laid out like [`NetParams`]: one `(weight, bias)` pair per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl NetGrads {
    pub fn zeros_like(params: &NetParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

impl NetParams {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases, identity output layer.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        hidden_activation: Activation,
        rng: &mut R,
    ) -> Self {
        let spec: Vec<(usize, Activation)> = hidden.iter().map(|&w| (w, hidden_activation)).collect();
        Self::glorot_layers(input_dim, &spec, output_dim, rng)
    }

    /// Like [`NetParams::glorot`] with a separate activation per hidden layer.
    pub fn glorot_layers<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[(usize, Activation)],
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push((input_dim, Activation::Identity));
        dims.extend_from_slice(hidden);
        dims.push((output_dim, Activation::Identity));
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0].0, w[1].0);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    weight: DenseTensor::matrix(fan_out, fan_in, weight),
                    bias: DenseTensor::zeros(vec![fan_out]),
                    activation: w[1].1,
                }
            })
            .collect();
        Self { layers }
    }

    /// Hash of every parameter bit pattern; equal fingerprints mean untouched weights.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for l in &self.layers {
            l.weight.shape().hash(&mut h);
            for v in l.weight.data().iter().chain(l.bias.data()) {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn zeroed_output(mut self) -> Self {
        if let Some(last) = self.layers.last_mut() {
            last.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
            last.bias.data_mut().iter_mut().for_each(|b| *b = 0.0);
        }
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("network has no layers"));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.len() != l.out_dim() {
                return Err(Error::config(format!("layer {k}: weight/bias shapes disagree")));
            }
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::config(format!(
                    "layer {k} emits {} values, layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        if self.layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::config("last layer activation must be identity"));
        }
        Ok(())
    }

    /// Record the parameters on `tape`. Frozen networks enter as constants,
    /// so gradients pass through them to their inputs but stop at the weights.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundNet {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let bias = DenseTensor::matrix(1, l.out_dim(), l.bias.data().to_vec());
                let (w, b) = if trainable {
                    (tape.param(&l.weight), tape.param(&bias))
                } else {
                    (tape.constant(&l.weight), tape.constant(&bias))
                };
                (w, b, l.activation)
            })
            .collect();
        BoundNet {
            layers,
            input_dim: self.input_dim(),
        }
    }

    /// Tape-free evaluation of one input row.
    pub fn eval_row(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in &self.layers {
            let (out, inp) = (l.out_dim(), l.in_dim());
            let w = l.weight.data();
            x = (0..out)
                .map(|o| {
                    let z = l.bias.data()[o] + (0..inp).map(|i| w[o * inp + i] * x[i]).sum::<f64>();
                    l.activation.apply(z)
                })
                .collect();
        }
        x
    }
}

/// A network whose parameters live on a particular tape.
#[derive(Clone, Debug)]
pub struct BoundNet {
    layers: Vec<(Var, Var, Activation)>,
    input_dim: usize,
}

impl BoundNet {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        if tape.cols(x) != self.input_dim {
            return Err(Error::config(format!(
                "network expects input width {}, got {}",
                self.input_dim,
                tape.cols(x)
            )));
        }
        let mut h = x;
        for &(w, b, act) in &self.layers {
            let z = tape.linear(h, w, b)?;
            h = act.on_tape(tape, z);
        }
        Ok(h)
    }

    /// Gradients for the bound parameters, aligned with [`NetParams`].
    /// Parameters that did not influence the loss get zeros.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> NetGrads {
        let pick = |v: Var| {
            grads
                .get(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
        };
        NetGrads {
            layers: self.layers.iter().map(|&(w, b, _)| (pick(w), pick(b))).collect(),
        }
    }

    pub fn param_vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b])
    }
}

/// Forward a `[B x input_dim]` batch; returns the output and the bound network
/// needed to read gradients after [`Tape::backward`].
pub fn mlp_forward(params: &NetParams, tape: &mut Tape, batch: &DenseTensor) -> Result<(Var, BoundNet)> {
    if batch.cols() != params.input_dim() {
        return Err(Error::config(format!(
            "batch width {} does not match network input {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    let bound = params.bind(tape, true);
    let x = tape.constant(batch);
    let out = bound.forward(tape, x)?;
    Ok((out, bound))
}
