use crate::error::Result;
use crate::metrics::mee;
use crate::nnkit::{Tape, Var};
use crate::pathsim::{Cloud, DriverBlock, StreamRng};
use crate::solver::{Dims, FbsdeProblem, FieldOracle, Mee, NodeState, Particle, SimOutput, Slot, StageEvaluator};

/// Conditional MV-FBSDE with the explicit solution `X = W + W0`,
/// `Y = sin(t + sum(X)/sqrt(d))`, `Z^i = Z0^i = cos(t + sum(X)/sqrt(d))/sqrt(d)`.
///
/// `m1 = (E[exp(-|x - x'|^2/d)], E[x'], E[y'])` has `d + 2` entries; the
/// scalar drift bracket is added to every coordinate of `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticMvFbsde {
    pub d: usize,
    pub horizon: f64,
}

/// Exact `(X, Y, Z, Z0)` at one time point.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticPoint {
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
    pub z0: Vec<f64>,
}

impl AnalyticMvFbsde {
    pub fn new(d: usize) -> Self {
        Self { d, horizon: 1.0 }
    }

    fn phase(&self, t: f64, x: &[f64]) -> f64 {
        t + x.iter().sum::<f64>() / (self.d as f64).sqrt()
    }

    pub fn oracle(&self, t: f64, w: &[f64], w0: &[f64]) -> AnalyticPoint {
        let x: Vec<f64> = w.iter().zip(w0).map(|(a, b)| a + b).collect();
        let p = self.phase(t, &x);
        let zi = p.cos() / (self.d as f64).sqrt();
        AnalyticPoint {
            y: p.sin(),
            z: vec![zi; self.d],
            z0: vec![zi; self.d],
            x,
        }
    }

    /// The drift bracket evaluated with plain numbers: `kernel_mean`, `mean_x`
    /// and `mean_y` describe the conditional law.
    pub fn drift_bracket(&self, t: f64, x: &[f64], kernel_mean: f64, mean_x: &[f64], mean_y: f64) -> f64 {
        let d = self.d as f64;
        let r2: f64 = x.iter().zip(mean_x).map(|(a, b)| (a - b).powi(2)).sum();
        let gauss = (-r2 / (d + 2.0 * t)).exp() * (d / (d + 2.0 * t)).powf(d / 2.0);
        let moment = (t + mean_x.iter().sum::<f64>() / d.sqrt()).sin() * (-t / 2.0).exp();
        (kernel_mean - gauss).sin() + 0.5 * (mean_y - moment)
    }

    /// `dY = -h dt + ...` with this `h`, evaluated with plain numbers.
    pub fn driver_value(&self, y: f64, z: &[f64], z0: &[f64]) -> f64 {
        let d = self.d as f64;
        let s: f64 = z.iter().chain(z0).sum();
        let zz: f64 = z.iter().chain(z0).map(|v| v * v).sum();
        -(s / (2.0 * d.sqrt()) - y + (2.0 * y * y + zz + 1.0).sqrt() - 3f64.sqrt())
    }

    /// Reference trajectories driven by the same increments as `block`.
    pub fn reference(&self, block: &DriverBlock) -> [Vec<Vec<f64>>; 4] {
        let grid = block.grid();
        let n = grid.n_steps;
        let b = block.batch();
        let mut out: [Vec<Vec<f64>>; 4] = Default::default();
        for node in 0..=n {
            let t = grid.time(node);
            let mut xs = Vec::with_capacity(b * self.d);
            let mut ys = Vec::with_capacity(b);
            let mut zs = Vec::with_capacity(b * self.d);
            let mut z0s = Vec::with_capacity(b * self.d);
            for r in 0..b {
                let mut w = block.idio_value(r, node);
                for (a, x0) in w.iter_mut().zip(block.initial_state(r)) {
                    *a += x0;
                }
                let w0 = block.common_value(block.common_index(r), node);
                let p = self.oracle(t, &w, &w0);
                xs.extend_from_slice(&p.x);
                ys.push(p.y);
                zs.extend_from_slice(&p.z);
                z0s.extend_from_slice(&p.z0);
            }
            out[0].push(xs);
            out[1].push(ys);
            if node < n {
                out[2].push(zs);
                out[3].push(z0s);
            }
        }
        out
    }
}

impl FbsdeProblem for AnalyticMvFbsde {
    fn name(&self) -> &str {
        "analytic-mvfbsde"
    }

    fn dims(&self) -> Dims {
        Dims {
            dx: self.d,
            dy: 1,
            q: self.d,
            ell: self.d + 2,
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

    fn drift(&self, tape: &mut Tape, s: &NodeState, m1: Option<Var>) -> Result<Var> {
        let m1 = m1.expect("m1 is active");
        let d = self.d as f64;
        let t = s.t;
        let b = tape.rows(s.x);
        let kernel = tape.slice_cols(m1, 0, 1)?;
        let mean_x = tape.slice_cols(m1, 1, self.d)?;
        let mean_y = tape.slice_cols(m1, self.d + 1, 1)?;

        let diff = tape.sub(s.x, mean_x)?;
        let sq = tape.square(diff);
        let r2 = tape.row_sum(sq);
        let e = tape.affine(r2, -1.0 / (d + 2.0 * t), 0.0);
        let e = tape.exp(e);
        let gauss = tape.scale(e, (d / (d + 2.0 * t)).powf(d / 2.0));
        let inner = tape.sub(kernel, gauss)?;
        let first = tape.sin(inner);

        let sx = tape.row_sum(mean_x);
        let phase = tape.affine(sx, 1.0 / d.sqrt(), t);
        let sin = tape.sin(phase);
        let moment = tape.scale(sin, (-t / 2.0).exp());
        let gap = tape.sub(mean_y, moment)?;
        let second = tape.scale(gap, 0.5);

        let bracket = tape.add(first, second)?;
        let ones = tape.full(b, self.d, 1.0);
        tape.mul_col(ones, bracket)
    }

    fn diffusion(&self, _: &mut Tape, _: &NodeState, _: Option<Var>, dw: Var) -> Result<Var> {
        Ok(dw)
    }

    fn common_diffusion(&self, _: &mut Tape, _: &NodeState, _: Option<Var>, dw0: Var) -> Result<Var> {
        Ok(dw0)
    }

    fn driver(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>) -> Result<Var> {
        let d = self.d as f64;
        let zs = tape.add(s.z, s.z0)?;
        let zsum = tape.row_sum(zs);
        let lin = tape.scale(zsum, 1.0 / (2.0 * d.sqrt()));
        let y2 = tape.square(s.y);
        let y2 = tape.scale(y2, 2.0);
        let z2 = tape.square(s.z);
        let z2 = tape.row_sum(z2);
        let z02 = tape.square(s.z0);
        let z02 = tape.row_sum(z02);
        let r = tape.add(y2, z2)?;
        let r = tape.add(r, z02)?;
        let r = tape.affine(r, 1.0, 1.0);
        let root = tape.sqrt(r);
        let a = tape.sub(lin, s.y)?;
        let a = tape.add(a, root)?;
        Ok(tape.affine(a, -1.0, 3f64.sqrt()))
    }

    fn terminal(&self, tape: &mut Tape, x: Var, _: Option<Var>) -> Result<Var> {
        let s = tape.row_sum(x);
        let p = tape.affine(s, 1.0 / (self.d as f64).sqrt(), self.horizon);
        Ok(tape.sin(p))
    }

    fn exact_embedding(&self, slot: Slot, _: f64, query: Particle<'_>, cloud: &Cloud<'_>, out: &mut [f64]) {
        if slot != Slot::M1 {
            out.fill(0.0);
            return;
        }
        let d = self.d as f64;
        let n = cloud.n1 as f64;
        let kernel: f64 = (0..cloud.n1)
            .map(|j| {
                let r2: f64 = query.x.iter().zip(cloud.x(j)).map(|(a, b)| (a - b).powi(2)).sum();
                (-r2 / d).exp()
            })
            .sum();
        out[0] = kernel / n;
        out[1..=self.d].copy_from_slice(&cloud.mean_x());
        out[self.d + 1] = cloud.mean_y()[0];
    }
}

/// The explicit solution as decoupling fields.
impl FieldOracle for AnalyticMvFbsde {
    fn y0(&self, x0: &[f64], out: &mut [f64]) {
        out[0] = self.phase(0.0, x0).sin();
    }

    fn z(&self, t: f64, x: &[f64], z: &mut [f64], z0: &mut [f64]) {
        let zi = self.phase(t, x).cos() / (self.d as f64).sqrt();
        z.fill(zi);
        z0.fill(zi);
    }
}

impl StageEvaluator for AnalyticMvFbsde {
    fn evaluate(&self, block: &DriverBlock, sim: &SimOutput) -> Result<Mee> {
        let [x, y, z, z0] = self.reference(block);
        Ok(Mee {
            x: mee(&sim.x, &x, self.d)?,
            y: mee(&sim.y, &y, 1)?,
            z: mee(&sim.z, &z, self.d)?,
            z0: mee(&sim.z0, &z0, self.d)?,
        })
    }
}
