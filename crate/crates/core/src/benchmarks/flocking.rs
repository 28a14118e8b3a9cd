use crate::error::{Error, Result};
use crate::metrics::mee;
use crate::nnkit::{DenseTensor, Tape, Var};
use crate::pathsim::{Cloud, DriverBlock, StreamRng};
use crate::solver::{Dims, FbsdeProblem, FieldOracle, Mee, NodeState, Particle, SimOutput, Slot, StageEvaluator};

use super::kernel::normal;

/// Square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = s;
        }
        Self { n, data }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.at(i, j) * v[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        Self {
            n,
            data: (0..n * n).map(|k| self.at(k % n, k / n)).collect(),
        }
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = Self::scaled_identity(n, 1.0).data;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
                .expect("non-empty");
            if a[p * n + c].abs() < 1e-12 {
                return Err(Error::config("matrix is singular"));
            }
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
                inv.swap(c * n + k, p * n + k);
            }
            let piv = a[c * n + c];
            for k in 0..n {
                a[c * n + k] /= piv;
                inv[c * n + k] /= piv;
            }
            for r in (0..n).filter(|&r| r != c) {
                let f = a[r * n + c];
                for k in 0..n {
                    a[r * n + k] -= f * a[c * n + k];
                    inv[r * n + k] -= f * inv[c * n + k];
                }
            }
        }
        Ok(Self { n, data: inv })
    }

    fn is_scaled_identity(&self, s: f64) -> bool {
        self.data == Self::scaled_identity(self.n, s).data
    }

    fn on_tape_transposed(&self, tape: &mut Tape) -> Var {
        tape.constant(&DenseTensor::matrix(self.n, self.n, self.transpose().data))
    }
}

/// Cucker-Smale flocking game with common noise. State `X = (x, v)` in `R^{2d}`,
/// backward `Y = (Y1, Y2)` in `R^{2d}`, noise dimension `q = d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Flocking {
    pub d: usize,
    pub beta: f64,
    pub r: Mat,
    pub q: Mat,
    pub c: Mat,
    pub dmat: Mat,
    pub mean_v0: Vec<f64>,
    pub horizon: f64,
    r_inv: Mat,
}

impl Flocking {
    #[allow(clippy::too_many_arguments)]
    pub fn new(d: usize, beta: f64, r: Mat, q: Mat, c: Mat, dmat: Mat, mean_v0: Vec<f64>, horizon: f64) -> Result<Self> {
        if beta < 0.0 || !beta.is_finite() {
            return Err(Error::config("flocking.beta must be a finite non-negative number"));
        }
        for (name, m) in [("R", &r), ("Q", &q), ("C", &c), ("D", &dmat)] {
            if m.n != d || m.data.len() != d * d {
                return Err(Error::config(format!("flocking matrix {name} must be {d}x{d}")));
            }
        }
        if mean_v0.len() != d {
            return Err(Error::config("flocking initial velocity mean must have d entries"));
        }
        let r_inv = r.inverse()?;
        Ok(Self {
            d,
            beta,
            r,
            q,
            c,
            dmat,
            mean_v0,
            horizon,
            r_inv,
        })
    }

    /// `R = Q = 0.5 I`, `C = c I`, `D = dd I`, `E[v0] = 1`, `T = 1`.
    pub fn standard(d: usize, beta: f64, c: f64, dd: f64) -> Self {
        Self::new(
            d,
            beta,
            Mat::scaled_identity(d, 0.5),
            Mat::scaled_identity(d, 0.5),
            Mat::scaled_identity(d, c),
            Mat::scaled_identity(d, dd),
            vec![1.0; d],
            1.0,
        )
        .expect("well-formed standard configuration")
    }

    pub fn weight(&self, r2: f64) -> f64 {
        (1.0 + r2).powf(-self.beta)
    }

    /// `C(x, v; f) = |E[w(|x-x'|)(v'-v)]|_Q^2`.
    pub fn misalignment(&self, x: &[f64], v: &[f64], cloud: &Cloud<'_>) -> f64 {
        let a = self.weighted_gap(x, v, cloud);
        let qa = self.q.apply(&a);
        a.iter().zip(&qa).map(|(p, q)| p * q).sum()
    }

    fn weighted_gap(&self, x: &[f64], v: &[f64], cloud: &Cloud<'_>) -> Vec<f64> {
        let d = self.d;
        let mut a = vec![0.0; d];
        for j in 0..cloud.n1 {
            let p = cloud.x(j);
            let r2: f64 = x.iter().zip(&p[..d]).map(|(s, t)| (s - t).powi(2)).sum();
            let w = self.weight(r2);
            for k in 0..d {
                a[k] += w * (p[d + k] - v[k]);
            }
        }
        a.iter().map(|s| s / cloud.n1 as f64).collect()
    }

    /// `m4` stacked as `[E[∂x w (v'-v)]^T Q E[w (v'-v)] ; E[w (v'-v)] E[-w]]`.
    pub fn m4(&self, x: &[f64], v: &[f64], cloud: &Cloud<'_>, out: &mut [f64]) {
        let d = self.d;
        let n = cloud.n1 as f64;
        let mut a = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        let mut mean_w = 0.0;
        for j in 0..cloud.n1 {
            let p = cloud.x(j);
            let (xp, vp) = (&p[..d], &p[d..]);
            let r2: f64 = x.iter().zip(xp).map(|(s, t)| (s - t).powi(2)).sum();
            let w = self.weight(r2);
            // ∂w/∂x_b = -2β (1 + r²)^{-β-1} (x_b - x'_b)
            let dw_scale = -2.0 * self.beta * (1.0 + r2).powf(-self.beta - 1.0);
            mean_w += w;
            for ai in 0..d {
                let gap = vp[ai] - v[ai];
                a[ai] += w * gap;
                for b in 0..d {
                    jac[ai * d + b] += dw_scale * (x[b] - xp[b]) * gap;
                }
            }
        }
        a.iter_mut().for_each(|s| *s /= n);
        jac.iter_mut().for_each(|s| *s /= n);
        mean_w /= n;
        let qa = self.q.apply(&a);
        for b in 0..d {
            out[b] = (0..d).map(|ai| jac[ai * d + b] * qa[ai]).sum();
            out[d + b] = -a[b] * mean_w;
        }
    }

    /// `H = (v, u) . y + C(x, v; f) + u^T R u`.
    pub fn hamiltonian(&self, x: &[f64], v: &[f64], cloud: &Cloud<'_>, y: &[f64], u: &[f64]) -> f64 {
        let d = self.d;
        let lin: f64 = v.iter().chain(u).zip(y).map(|(a, b)| a * b).sum();
        let ru = self.r.apply(u);
        let quad: f64 = u.iter().zip(&ru).map(|(a, b)| a * b).sum();
        debug_assert_eq!(y.len(), 2 * d);
        lin + self.misalignment(x, v, cloud) + quad
    }

    /// Minimizer `-R^{-1} y_{d+1:2d} / 2` of the Hamiltonian.
    pub fn optimal_control(&self, y: &[f64]) -> Vec<f64> {
        self.r_inv.apply(&y[self.d..]).iter().map(|s| -0.5 * s).collect()
    }

    fn check_lq(&self) -> Result<()> {
        if self.beta != 0.0 {
            return Err(Error::usage(format!("the LQ oracle needs beta = 0, got {}", self.beta)));
        }
        if !self.r.is_scaled_identity(0.5) || !self.q.is_scaled_identity(0.5) {
            return Err(Error::usage("the LQ oracle is only available for R = Q = 0.5 I"));
        }
        Ok(())
    }

    /// `(Y2, Z2, Z0_2)` of the `β = 0` solution at one point; `Z2 = η C` row-major.
    pub fn lq_oracle(&self, t: f64, v: &[f64], w0: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.check_lq()?;
        let eta = riccati_eta(t, self.horizon)?;
        let dw0 = self.dmat.apply(w0);
        let y2 = (0..self.d).map(|k| eta * (v[k] - self.mean_v0[k] - dw0[k])).collect();
        let z2 = self.c.data.iter().map(|c| eta * c).collect();
        Ok((y2, z2, vec![0.0; self.d * self.d]))
    }

    /// Closed-loop `β = 0` equilibrium driven by `block`'s increments, as
    /// `[X, Y, Z, Z0]` node arrays in the solver's layout.
    pub fn lq_reference(&self, block: &DriverBlock) -> Result<[Vec<Vec<f64>>; 4]> {
        self.check_lq()?;
        let d = self.d;
        let grid = block.grid();
        let (n, dt, b) = (grid.n_steps, grid.dt(), block.batch());
        let mut state: Vec<f64> = block.initial_batch();
        let mut out: [Vec<Vec<f64>>; 4] = Default::default();
        for node in 0..=n {
            let t = grid.time(node);
            let eta = riccati_eta(t, self.horizon)?;
            let mut ys = vec![0.0; b * 2 * d];
            for r in 0..b {
                let w0 = block.common_value(block.common_index(r), node);
                let (y2, _, _) = self.lq_oracle(t, &state[r * 2 * d + d..(r + 1) * 2 * d], &w0)?;
                ys[r * 2 * d + d..(r + 1) * 2 * d].copy_from_slice(&y2);
            }
            out[0].push(state.clone());
            if node < n {
                let mut z = vec![0.0; 2 * d * d];
                for (k, c) in self.c.data.iter().enumerate() {
                    z[d * d + k] = eta * c;
                }
                out[2].push(z.repeat(b));
                out[3].push(vec![0.0; b * 2 * d * d]);
                for r in 0..b {
                    let row = &mut state[r * 2 * d..(r + 1) * 2 * d];
                    let u = self.optimal_control(&ys[r * 2 * d..(r + 1) * 2 * d]);
                    let cw = self.c.apply(block.idio_increment(r, node));
                    let dw0 = self.dmat.apply(block.common_increment(block.common_index(r), node));
                    for k in 0..d {
                        let v = row[d + k];
                        row[k] += v * dt;
                        row[d + k] += u[k] * dt + cw[k] + dw0[k];
                    }
                }
            }
            out[1].push(ys);
        }
        Ok(out)
    }
}

/// `η(t) = (e^{2T} - e^{2t}) / (e^{2t} + e^{2T})`, the Riccati solution for `R = Q = 0.5 I`.
pub fn riccati_eta(t: f64, horizon: f64) -> Result<f64> {
    if t > horizon || t < 0.0 {
        return Err(Error::usage(format!("riccati_eta needs 0 <= t <= T, got t = {t}, T = {horizon}")));
    }
    Ok(((2.0 * horizon).exp() - (2.0 * t).exp()) / ((2.0 * t).exp() + (2.0 * horizon).exp()))
}

impl FbsdeProblem for Flocking {
    fn name(&self) -> &str {
        "flocking"
    }

    fn dims(&self) -> Dims {
        Dims {
            dx: 2 * self.d,
            dy: 2 * self.d,
            q: self.d,
            ell: 2 * self.d,
        }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for v in out[..self.d].iter_mut() {
            *v = normal(rng);
        }
        for (v, m) in out[self.d..].iter_mut().zip(&self.mean_v0) {
            *v = m + normal(rng);
        }
    }

    fn is_active(&self, slot: Slot) -> bool {
        slot == Slot::M4
    }

    fn drift(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>) -> Result<Var> {
        let d = self.d;
        let v = tape.slice_cols(s.x, d, d)?;
        let y2 = tape.slice_cols(s.y, d, d)?;
        let rinv_t = self.r_inv.on_tape_transposed(tape);
        let ry = tape.matmul(y2, rinv_t)?;
        let u = tape.scale(ry, -0.5);
        tape.concat(&[v, u])
    }

    fn diffusion(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>, dw: Var) -> Result<Var> {
        let b = tape.rows(s.x);
        let zero = tape.full(b, self.d, 0.0);
        let ct = self.c.on_tape_transposed(tape);
        let cdw = tape.matmul(dw, ct)?;
        tape.concat(&[zero, cdw])
    }

    fn common_diffusion(&self, tape: &mut Tape, s: &NodeState, _: Option<Var>, dw0: Var) -> Result<Var> {
        let b = tape.rows(s.x);
        let zero = tape.full(b, self.d, 0.0);
        let dt = self.dmat.on_tape_transposed(tape);
        let ddw = tape.matmul(dw0, dt)?;
        tape.concat(&[zero, ddw])
    }

    fn driver(&self, tape: &mut Tape, s: &NodeState, m4: Option<Var>) -> Result<Var> {
        let d = self.d;
        let m4 = m4.expect("m4 is active");
        let first = tape.slice_cols(m4, 0, d)?;
        let second = tape.slice_cols(m4, d, d)?;
        let hx = tape.scale(first, 2.0);
        let y1 = tape.slice_cols(s.y, 0, d)?;
        let qt = self.q.on_tape_transposed(tape);
        let qs = tape.matmul(second, qt)?;
        let qs = tape.scale(qs, 2.0);
        let hv = tape.add(y1, qs)?;
        tape.concat(&[hx, hv])
    }

    fn terminal(&self, tape: &mut Tape, x: Var, _: Option<Var>) -> Result<Var> {
        let b = tape.rows(x);
        Ok(tape.full(b, 2 * self.d, 0.0))
    }

    fn exact_embedding(&self, slot: Slot, _: f64, query: Particle<'_>, cloud: &Cloud<'_>, out: &mut [f64]) {
        if slot != Slot::M4 {
            out.fill(0.0);
            return;
        }
        let (x, v) = query.x.split_at(self.d);
        self.m4(x, v, cloud, out);
    }
}

/// The `β = 0` equilibrium as decoupling fields. Only valid for `R = Q = 0.5 I`
/// and an initial law with mean velocity `mean_v0`.
impl FieldOracle for Flocking {
    fn y0(&self, x0: &[f64], out: &mut [f64]) {
        let d = self.d;
        let (y2, _, _) = self.lq_oracle(0.0, &x0[d..], &vec![0.0; d]).expect("LQ configuration");
        out[..d].fill(0.0);
        out[d..].copy_from_slice(&y2);
    }

    fn z(&self, t: f64, _: &[f64], z: &mut [f64], z0: &mut [f64]) {
        let d = self.d;
        let eta = riccati_eta(t, self.horizon).expect("t within horizon");
        z.fill(0.0);
        for (k, c) in self.c.data.iter().enumerate() {
            z[d * d + k] = eta * c;
        }
        z0.fill(0.0);
    }
}

/// MEE against the closed-loop LQ equilibrium (β = 0 only).
impl StageEvaluator for Flocking {
    fn evaluate(&self, block: &DriverBlock, sim: &SimOutput) -> Result<Mee> {
        let [x, y, z, z0] = self.lq_reference(block)?;
        let (dx, dz) = (2 * self.d, 2 * self.d * self.d);
        Ok(Mee {
            x: mee(&sim.x, &x, dx)?,
            y: mee(&sim.y, &y, dx)?,
            z: mee(&sim.z, &z, dz)?,
            z0: mee(&sim.z0, &z0, dz)?,
        })
    }
}

/// Diagnostics of a flocking rollout used to judge a run.
impl Flocking {
    /// MEE between the learned `Y2` and the LQ ansatz evaluated along the
    /// learned velocities.
    pub fn y2_error(&self, block: &DriverBlock, sim: &SimOutput) -> Result<f64> {
        let d = self.d;
        let grid = block.grid();
        let mut est = Vec::with_capacity(grid.n_steps + 1);
        let mut reference = Vec::with_capacity(grid.n_steps + 1);
        for (node, x) in sim.x.iter().enumerate() {
            let t = grid.time(node);
            let mut r = Vec::with_capacity(sim.batch() * d);
            for (row, state) in x.chunks(2 * d).enumerate() {
                let w0 = block.common_value(block.common_index(row), node);
                r.extend(self.lq_oracle(t, &state[d..], &w0)?.0);
            }
            est.push(second_half(&sim.y[node], d));
            reference.push(r);
        }
        mee(&est, &reference, d)
    }

    /// Mean absolute entry of the `Z0` rows acting on the velocity equation.
    pub fn z0_velocity_magnitude(&self, sim: &SimOutput) -> f64 {
        let dd = self.d * self.d;
        let (mut total, mut count) = (0.0, 0usize);
        for z0 in &sim.z0 {
            for row in z0.chunks(2 * dd) {
                total += row[dd..].iter().map(|v| v.abs()).sum::<f64>();
                count += dd;
            }
        }
        total / count.max(1) as f64
    }

    /// MEE between the empirical conditional mean velocity and `E[v0] + D W0_t`.
    pub fn mean_velocity_error(&self, block: &DriverBlock, sim: &SimOutput) -> Result<f64> {
        let d = self.d;
        let n1 = block.n1();
        let mut est = Vec::with_capacity(sim.x.len());
        let mut reference = Vec::with_capacity(sim.x.len());
        for (node, x) in sim.x.iter().enumerate() {
            let mut e = Vec::with_capacity(block.n2() * d);
            let mut r = Vec::with_capacity(block.n2() * d);
            for (j2, cloud) in x.chunks(n1 * 2 * d).enumerate() {
                let mut mean = vec![0.0; d];
                for state in cloud.chunks(2 * d) {
                    for (m, v) in mean.iter_mut().zip(&state[d..]) {
                        *m += v / n1 as f64;
                    }
                }
                let dw0 = self.dmat.apply(&block.common_value(j2, node));
                e.extend(mean);
                r.extend(self.mean_v0.iter().zip(&dw0).map(|(a, b)| a + b));
            }
            est.push(e);
            reference.push(r);
        }
        mee(&est, &reference, d)
    }

    /// Per common path, the standard deviation of each terminal velocity
    /// coordinate over its particles: `[n2][d]`.
    pub fn terminal_velocity_spread(&self, sim: &SimOutput) -> Vec<Vec<f64>> {
        let d = self.d;
        let last = sim.x.last().expect("rollout has a terminal node");
        last.chunks(sim.n1 * 2 * d)
            .map(|cloud| {
                (0..d)
                    .map(|k| {
                        let vals: Vec<f64> = cloud.chunks(2 * d).map(|s| s[d + k]).collect();
                        let m = vals.iter().sum::<f64>() / vals.len() as f64;
                        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Second half (`Y2`) of every row of a `[B x 2d]` array.
pub fn second_half(values: &[f64], d: usize) -> Vec<f64> {
    values.chunks(2 * d).flat_map(|r| r[d..].iter().copied()).collect()
}
