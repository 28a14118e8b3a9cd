use rand_distr::{Distribution, StandardNormal};

use crate::embed::EvalSet;
use crate::error::Result;
use crate::nnkit::{Tape, Var};
use crate::pathsim::{Cloud, StreamRng};
use crate::sigkit::FeatureSpec;
use crate::solver::{draw_block, Dims, FbsdeProblem, NodeState, Particle, Slot};
use crate::pathsim::TimeGrid;

/// `X = W + W0` with the embedding `m(t, x, ν) = E_ν[exp(-|x - x'|^2 / q)]`.
/// Only the embedding is of interest; the backward part is trivial.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    pub q: usize,
    pub horizon: f64,
}

impl GaussianKernel {
    pub fn new(q: usize) -> Self {
        Self { q, horizon: 1.0 }
    }

    /// Exact conditional value `(q/(q+2t))^{q/2} exp(-|x - W0_t|^2 / (q+2t))`.
    pub fn closed_form(&self, t: f64, x: &[f64], w0: &[f64]) -> f64 {
        let q = self.q as f64;
        let r2: f64 = x.iter().zip(w0).map(|(a, b)| (a - b).powi(2)).sum();
        (q / (q + 2.0 * t)).powf(q / 2.0) * (-r2 / (q + 2.0 * t)).exp()
    }

    /// `rows` fresh trajectories, each with its own common path, evaluated at
    /// every node against the closed form.
    pub fn eval_set(&self, grid: TimeGrid, features: FeatureSpec, rows: usize, seed: u64, epoch: u64) -> Result<EvalSet> {
        let (block, feats) = draw_block(self, grid, 1, rows, features, seed, epoch)?;
        let n_nodes = grid.n_steps + 1;
        let q = self.q;
        let f = feats.dim();
        let mut out = EvalSet {
            times: grid.times(),
            rows,
            dx: q,
            feat_dim: f,
            ell: 1,
            state: Vec::with_capacity(n_nodes * rows * q),
            feats: Vec::with_capacity(n_nodes * rows * f),
            reference: Vec::with_capacity(n_nodes * rows),
        };
        for node in 0..n_nodes {
            for j in 0..rows {
                let w0 = block.common_value(j, node);
                let w = block.idio_value(j, node);
                let x: Vec<f64> = w.iter().zip(&w0).map(|(a, b)| a + b).collect();
                out.reference.push(self.closed_form(grid.time(node), &x, &w0));
                out.state.extend_from_slice(&x);
                out.feats.extend_from_slice(feats.get(j, node));
            }
        }
        Ok(out)
    }
}

impl FbsdeProblem for GaussianKernel {
    fn name(&self) -> &str {
        "gaussian-kernel"
    }

    fn dims(&self) -> Dims {
        Dims {
            dx: self.q,
            dy: 1,
            q: self.q,
            ell: 1,
        }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn sample_initial(&self, _: &mut StreamRng, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_active(&self, slot: Slot) -> bool {
        slot == Slot::M1
    }

    fn drift(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>) -> Result<Var> {
        let b = tape.rows(s.x);
        Ok(tape.full(b, self.q, 0.0))
    }

    fn diffusion(&self, _: &mut Tape, _: &NodeState, _: Option<Var>, dw: Var) -> Result<Var> {
        Ok(dw)
    }

    fn common_diffusion(&self, _: &mut Tape, _: &NodeState, _: Option<Var>, dw0: Var) -> Result<Var> {
        Ok(dw0)
    }

    fn driver(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>) -> Result<Var> {
        let b = tape.rows(s.x);
        Ok(tape.full(b, 1, 0.0))
    }

    fn terminal(&self, tape: &mut Tape, x: Var, _: Option<Var>) -> Result<Var> {
        let b = tape.rows(x);
        Ok(tape.full(b, 1, 0.0))
    }

    fn exact_embedding(&self, _: Slot, _: f64, query: Particle<'_>, cloud: &Cloud<'_>, out: &mut [f64]) {
        let q = self.q as f64;
        let total: f64 = (0..cloud.n1)
            .map(|j| {
                let r2: f64 = query.x.iter().zip(cloud.x(j)).map(|(a, b)| (a - b).powi(2)).sum();
                (-r2 / q).exp()
            })
            .sum();
        out[0] = total / cloud.n1 as f64;
    }
}

/// Scalar `dX = σ X dW`, `X_0 = 1`, used to check the Euler scheme's strong order.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricNoise {
    pub sigma: f64,
}

impl GeometricNoise {
    /// `exp(σ W_T - σ² T / 2)` for `X_0 = 1`.
    pub fn exact(&self, t: f64, w: f64) -> f64 {
        (self.sigma * w - 0.5 * self.sigma * self.sigma * t).exp()
    }
}

impl FbsdeProblem for GeometricNoise {
    fn name(&self) -> &str {
        "geometric-noise"
    }

    fn dims(&self) -> Dims {
        Dims {
            dx: 1,
            dy: 1,
            q: 1,
            ell: 1,
        }
    }

    fn horizon(&self) -> f64 {
        1.0
    }

    fn sample_initial(&self, _: &mut StreamRng, out: &mut [f64]) {
        out.fill(1.0);
    }

    fn is_active(&self, _: Slot) -> bool {
        false
    }

    fn drift(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>) -> Result<Var> {
        let b = tape.rows(s.x);
        Ok(tape.full(b, 1, 0.0))
    }

    fn diffusion(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>, dw: Var) -> Result<Var> {
        let xdw = tape.mul(s.x, dw)?;
        Ok(tape.scale(xdw, self.sigma))
    }

    fn common_diffusion(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>, _: Var) -> Result<Var> {
        let b = tape.rows(s.x);
        Ok(tape.full(b, 1, 0.0))
    }

    fn driver(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>) -> Result<Var> {
        let b = tape.rows(s.x);
        Ok(tape.full(b, 1, 0.0))
    }

    fn terminal(&self, tape: &mut Tape, x: Var, _: Option<Var>) -> Result<Var> {
        let b = tape.rows(x);
        Ok(tape.full(b, 1, 0.0))
    }

    fn exact_embedding(&self, _: Slot, _: f64, _: Particle<'_>, _: &Cloud<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Standard normal sampler shared by the benchmarks' initial laws.
pub(crate) fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
