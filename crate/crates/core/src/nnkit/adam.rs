use serde::{Deserialize, Serialize};

use super::mlp::{NetGrads, NetParams};
use crate::error::{Error, Result};

/// Adam moments for one [`NetParams`], with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &NetParams) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &NetParams, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let buffers: Vec<Vec<f64>> = params
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]])
            .collect();
        Self {
            first_moment: buffers.clone(),
            second_moment: buffers,
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One Adam update. A non-finite gradient leaves both the parameters and
    /// the state untouched.
    pub fn step(&mut self, params: &mut NetParams, grads: &NetGrads, rate: f64) -> Result<()> {
        if rate.is_nan() || rate <= 0.0 {
            return Err(Error::usage(format!("learning rate must be positive, got {rate}")));
        }
        if grads.layers.len() != params.layers.len()
            || self.first_moment.len() != 2 * params.layers.len()
        {
            return Err(Error::usage("gradient/parameter/state layouts differ"));
        }
        for (k, ((gw, gb), l)) in grads.layers.iter().zip(&params.layers).enumerate() {
            if gw.len() != l.weight.len() || gb.len() != l.bias.len() {
                return Err(Error::usage(format!("layer {k}: gradient shape mismatch")));
            }
            if gw.iter().chain(gb).any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: k });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (k, (gw, gb)) in grads.layers.iter().enumerate() {
            let layer = &mut params.layers[k];
            for (slot, (p, g)) in [(2 * k, (layer.weight.data_mut(), gw)), (2 * k + 1, (layer.bias.data_mut(), gb))] {
                let m = &mut self.first_moment[slot];
                let v = &mut self.second_moment[slot];
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    p[i] -= rate * mhat / (vhat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::mlp::{Activation, Layer};
    use crate::nnkit::tensor::DenseTensor;

    fn scalar_net(w: f64) -> NetParams {
        NetParams {
            layers: vec![Layer {
                weight: DenseTensor::matrix(1, 1, vec![w]),
                bias: DenseTensor::zeros(vec![1]),
                activation: Activation::Identity,
            }],
        }
    }

    fn grads(gw: f64) -> NetGrads {
        NetGrads {
            layers: vec![(vec![gw], vec![0.0])],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_net(0.7);
        let mut s = AdamState::new(&p);
        s.step(&mut p, &grads(0.0), 0.1).unwrap();
        assert_eq!(p.layers[0].weight.data()[0], 0.7);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_rate() {
        // m_hat = g, v_hat = g^2 => update = rate * g / (|g| + eps)
        for g in [2.5, -0.003] {
            let mut p = scalar_net(1.0);
            let mut s = AdamState::new(&p);
            s.step(&mut p, &grads(g), 0.01).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p.layers[0].weight.data()[0] - expected).abs() < 1e-15);
            assert!((p.layers[0].weight.data()[0] - (1.0 - 0.01 * g.signum())).abs() < 0.01 * 1e-8 / g.abs() + 1e-15);
        }
    }

    #[test]
    fn two_steps_follow_recursion() {
        let (g, rate) = (0.4, 0.05);
        let mut p = scalar_net(0.0);
        let mut s = AdamState::new(&p);
        s.step(&mut p, &grads(g), rate).unwrap();
        s.step(&mut p, &grads(g), rate).unwrap();
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        let (mut m, mut v, mut w) = (0.0, 0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            w -= rate * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert_eq!(p.layers[0].weight.data()[0], w);
    }

    #[test]
    fn nan_gradient_is_reported() {
        let mut p = scalar_net(1.0);
        let mut s = AdamState::new(&p);
        let err = s.step(&mut p, &grads(f64::NAN), 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { layer: 0 }));
        assert_eq!(s.step_count(), 0);
        assert_eq!(p.layers[0].weight.data()[0], 1.0);
    }
}
