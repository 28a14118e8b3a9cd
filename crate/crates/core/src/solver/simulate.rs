use super::fields::{BoundFields, EmbedSet, EmbedSource, FieldModel};
use super::problem::{Dims, FbsdeProblem, NodeState, Particle, Slot};
use crate::embed::EmbedArch;
use crate::error::{Error, Result};
use crate::nnkit::{BoundNet, Tape, Var};
use crate::pathsim::{Cloud, CondEnsemble, DriverBlock, FeatureTable};

/// Discretized trajectories of one rollout. Per-node arrays are `[B x width]`
/// with batch row `n2 * N1 + n1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub dims: Dims,
    pub n1: usize,
    pub n2: usize,
    /// Nodes `0..=N_T`.
    pub x: Vec<Vec<f64>>,
    /// Nodes `0..=N_T`; `y[0] = u(X_0)` and later nodes follow the forward-shooting recursion.
    pub y: Vec<Vec<f64>>,
    /// Nodes `0..N_T`.
    pub z: Vec<Vec<f64>>,
    pub z0: Vec<Vec<f64>>,
    /// `g(X_T, m5)`, `[B x dy]`.
    pub terminal: Vec<f64>,
}

impl SimOutput {
    pub fn batch(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn n_steps(&self) -> usize {
        self.z.len()
    }

    pub fn ensemble(&self) -> Result<CondEnsemble> {
        CondEnsemble::from_nodes(&self.x, &self.y, self.n2, self.n1, self.dims.dx, self.dims.dy)
    }

    /// `g(X_T, m5) - Y_T` per particle.
    pub fn mismatch(&self) -> Vec<f64> {
        let yt = self.y.last().expect("at least one node");
        self.terminal.iter().zip(yt).map(|(g, y)| g - y).collect()
    }

    /// Mean over particles of the squared terminal mismatch.
    pub fn terminal_loss(&self) -> f64 {
        self.mismatch().iter().map(|v| v * v).sum::<f64>() / self.batch() as f64
    }
}

pub(crate) enum BoundEmbed<'a> {
    Off,
    Zero,
    Learned(&'a EmbedArch, BoundNet),
    Empirical,
}

/// Embeddings bound (frozen) to a tape.
pub(crate) struct BoundEmbeds<'a>(Vec<BoundEmbed<'a>>);

impl<'a> BoundEmbeds<'a> {
    pub(crate) fn bind(problem: &dyn FbsdeProblem, set: &'a EmbedSet, tape: &mut Tape) -> Self {
        Self(
            Slot::ALL
                .iter()
                .map(|&s| {
                    if !problem.is_active(s) {
                        return BoundEmbed::Off;
                    }
                    match set.get(s) {
                        EmbedSource::Zero => BoundEmbed::Zero,
                        EmbedSource::Learned(a) => BoundEmbed::Learned(a, a.net.bind(tape, false)),
                        EmbedSource::Empirical => BoundEmbed::Empirical,
                    }
                })
                .collect(),
        )
    }
}

/// Everything one discrete rollout reads besides the networks.
pub(crate) struct Rollout<'a> {
    pub problem: &'a dyn FbsdeProblem,
    pub block: &'a DriverBlock,
    pub feats: &'a FeatureTable,
    pub dims: Dims,
    pub stage: usize,
}

pub(crate) struct StepOut {
    pub x: Var,
    pub y: Var,
    pub z: Var,
    pub z0: Var,
}

impl<'a> Rollout<'a> {
    pub(crate) fn new(
        problem: &'a dyn FbsdeProblem,
        fields: FieldModel<'_>,
        embeds: &EmbedSet,
        block: &'a DriverBlock,
        feats: &'a FeatureTable,
        stage: usize,
    ) -> Result<Self> {
        let dims = problem.dims();
        if block.dx() != dims.dx || block.q() != dims.q {
            return Err(Error::config(format!(
                "drivers have (dx {}, q {}) but {} needs ({}, {})",
                block.dx(),
                block.q(),
                problem.name(),
                dims.dx,
                dims.q
            )));
        }
        if feats.n2() != block.n2() {
            return Err(Error::config("feature table was built from a different driver block"));
        }
        let spec = embeds.features()?;
        fields.check(dims, spec)?;
        let expected = match (fields, spec) {
            (FieldModel::Nets(f), _) => Some(f.features),
            (_, s) => s,
        };
        if let Some(s) = expected {
            if s.kind != feats.kind() || s.depth != feats.depth() {
                return Err(Error::config("feature table does not match the networks' path features"));
            }
        }
        Ok(Self {
            problem,
            block,
            feats,
            dims,
            stage,
        })
    }

    fn batch(&self) -> usize {
        self.block.batch()
    }

    fn embed(&self, tape: &mut Tape, e: &BoundEmbed<'_>, slot: Slot, s: &NodeState, feats: Var) -> Result<Option<Var>> {
        let (b, ell) = (self.batch(), self.dims.ell);
        Ok(match e {
            BoundEmbed::Off => None,
            BoundEmbed::Zero => Some(tape.full(b, ell, 0.0)),
            BoundEmbed::Learned(arch, net) => {
                let tcol = tape.full(b, 1, s.t);
                Some(arch.predict(tape, net, tcol, s.x, feats)?)
            }
            BoundEmbed::Empirical => {
                let (dx, dy, n1) = (self.dims.dx, self.dims.dy, self.block.n1());
                let xv = tape.value(s.x).to_vec();
                let yv = tape.value(s.y).to_vec();
                let mut out = vec![0.0; b * ell];
                for j2 in 0..self.block.n2() {
                    let cloud = Cloud {
                        n1,
                        dx,
                        dy,
                        x: &xv[j2 * n1 * dx..(j2 + 1) * n1 * dx],
                        y: &yv[j2 * n1 * dy..(j2 + 1) * n1 * dy],
                    };
                    for j1 in 0..n1 {
                        let r = j2 * n1 + j1;
                        let q = Particle {
                            x: cloud.x(j1),
                            y: cloud.y(j1),
                        };
                        self.problem.exact_embedding(slot, s.t, q, &cloud, &mut out[r * ell..(r + 1) * ell]);
                    }
                }
                Some(tape.constant_from(b, ell, out))
            }
        })
    }

    /// One Euler step of the forward and forward-shot backward recursions from node `node`.
    pub(crate) fn step(
        &self,
        tape: &mut Tape,
        fields: &BoundFields<'_>,
        embeds: &BoundEmbeds<'_>,
        node: usize,
        x: Var,
        y: Var,
    ) -> Result<StepOut> {
        let grid = self.block.grid();
        let (b, d) = (self.batch(), self.dims);
        let (t, dt) = (grid.time(node), grid.dt());
        let feats = tape.constant_from(b, self.feats.dim(), self.feats.batch(self.block, node));
        let (z, z0) = fields.z(tape, d, t, x, feats)?;
        let s = NodeState { t, x, y, z, z0 };
        let m1 = self.embed(tape, &embeds.0[0], Slot::M1, &s, feats)?;
        let m2 = self.embed(tape, &embeds.0[1], Slot::M2, &s, feats)?;
        let m3 = self.embed(tape, &embeds.0[2], Slot::M3, &s, feats)?;
        let m4 = self.embed(tape, &embeds.0[3], Slot::M4, &s, feats)?;
        let dw = tape.constant_from(b, d.q, self.block.idio_batch(node));
        let dw0 = tape.constant_from(b, d.q, self.block.common_batch(node));

        let drift = self.problem.drift(tape, &s, m1)?;
        let diff = self.problem.diffusion(tape, &s, m2, dw)?;
        let common = self.problem.common_diffusion(tape, &s, m3, dw0)?;
        let h = self.problem.driver(tape, &s, m4)?;

        let drift_dt = tape.scale(drift, dt);
        let x1 = tape.add(x, drift_dt)?;
        let x2 = tape.add(x1, diff)?;
        let x_next = tape.add(x2, common)?;

        let h_dt = tape.scale(h, -dt);
        let zdw = tape.row_matvec(z, dw)?;
        let z0dw0 = tape.row_matvec(z0, dw0)?;
        let y1 = tape.add(y, h_dt)?;
        let y2 = tape.add(y1, zdw)?;
        let y_next = tape.add(y2, z0dw0)?;
        Ok(StepOut {
            x: x_next,
            y: y_next,
            z,
            z0,
        })
    }

    /// `g(X_T, m5(T, X_T, ...))`.
    pub(crate) fn terminal(&self, tape: &mut Tape, embeds: &BoundEmbeds<'_>, x: Var, y: Var) -> Result<Var> {
        let n = self.block.grid().n_steps;
        let b = self.batch();
        let feats = tape.constant_from(b, self.feats.dim(), self.feats.batch(self.block, n));
        let z = tape.full(b, self.dims.dz(), 0.0);
        let s = NodeState {
            t: self.block.grid().time(n),
            x,
            y,
            z,
            z0: z,
        };
        let m5 = self.embed(tape, &embeds.0[4], Slot::M5, &s, feats)?;
        self.problem.terminal(tape, x, m5)
    }

    pub(crate) fn check_finite(&self, values: &[f64], width: usize, node: usize, what: &str) -> Result<()> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let row = i / width.max(1);
            let n1 = self.block.n1();
            return Err(Error::Simulation {
                stage: self.stage,
                node,
                n1: row % n1,
                n2: row / n1,
                reason: format!("non-finite {what} at t = {}", self.block.grid().time(node)),
            });
        }
        Ok(())
    }
}

/// Step-1 rollout under frozen networks. Every node uses a fresh tape, so
/// memory stays bounded by one step.
pub fn simulate(
    problem: &dyn FbsdeProblem,
    fields: FieldModel<'_>,
    embeds: &EmbedSet,
    block: &DriverBlock,
    feats: &FeatureTable,
    stage: usize,
) -> Result<SimOutput> {
    let r = Rollout::new(problem, fields, embeds, block, feats, stage)?;
    let d = r.dims;
    let b = block.batch();
    let n = block.grid().n_steps;
    let mut out = SimOutput {
        dims: d,
        n1: block.n1(),
        n2: block.n2(),
        x: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n),
        z0: Vec::with_capacity(n),
        terminal: Vec::new(),
    };
    let mut xv = block.initial_batch();
    let mut yv = Vec::new();
    for node in 0..n {
        let mut tape = Tape::new();
        let bf = fields.bind(&mut tape, false);
        let be = BoundEmbeds::bind(problem, embeds, &mut tape);
        let x = tape.constant_from(b, d.dx, xv.clone());
        let y = if node == 0 {
            let y = bf.y0(&mut tape, d, x)?;
            yv = tape.value(y).to_vec();
            r.check_finite(&yv, d.dy, 0, "Y")?;
            y
        } else {
            tape.constant_from(b, d.dy, yv.clone())
        };
        let st = r.step(&mut tape, &bf, &be, node, x, y)?;
        let (zv, z0v) = (tape.value(st.z).to_vec(), tape.value(st.z0).to_vec());
        r.check_finite(&zv, d.dz(), node, "Z")?;
        r.check_finite(&z0v, d.dz(), node, "Z0")?;
        out.x.push(std::mem::replace(&mut xv, tape.value(st.x).to_vec()));
        out.y.push(std::mem::replace(&mut yv, tape.value(st.y).to_vec()));
        out.z.push(zv);
        out.z0.push(z0v);
        r.check_finite(&xv, d.dx, node + 1, "X")?;
        r.check_finite(&yv, d.dy, node + 1, "Y")?;
    }
    let mut tape = Tape::new();
    let be = BoundEmbeds::bind(problem, embeds, &mut tape);
    let x = tape.constant_from(b, d.dx, xv.clone());
    let y = if n == 0 {
        let bf = fields.bind(&mut tape, false);
        let y = bf.y0(&mut tape, d, x)?;
        yv = tape.value(y).to_vec();
        y
    } else {
        tape.constant_from(b, d.dy, yv.clone())
    };
    let g = r.terminal(&mut tape, &be, x, y)?;
    out.terminal = tape.value(g).to_vec();
    r.check_finite(&out.terminal, d.dy, n, "terminal value")?;
    out.x.push(xv);
    out.y.push(yv);
    Ok(out)
}

/// Record the whole rollout on `tape` and return the terminal loss
/// `mean_j |g(X_T^j, m5) - Y_T^j|^2`.
pub(crate) fn bsde_forward(r: &Rollout<'_>, tape: &mut Tape, fields: &BoundFields<'_>, embeds: &BoundEmbeds<'_>) -> Result<Var> {
    let d = r.dims;
    let b = r.block.batch();
    let x0 = tape.constant_from(b, d.dx, r.block.initial_batch());
    let mut y = fields.y0(tape, d, x0)?;
    let mut x = x0;
    for node in 0..r.block.grid().n_steps {
        let st = r.step(tape, fields, embeds, node, x, y)?;
        x = st.x;
        y = st.y;
    }
    let g = r.terminal(tape, embeds, x, y)?;
    let diff = tape.sub(g, y)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / b as f64))
}

/// Deep-BSDE loss of the given fields on `block`, evaluated on a single tape.
pub fn bsde_loss(
    problem: &dyn FbsdeProblem,
    fields: FieldModel<'_>,
    embeds: &EmbedSet,
    block: &DriverBlock,
    feats: &FeatureTable,
) -> Result<f64> {
    let r = Rollout::new(problem, fields, embeds, block, feats, 0)?;
    let mut tape = Tape::new();
    let bf = fields.bind(&mut tape, false);
    let be = BoundEmbeds::bind(problem, embeds, &mut tape);
    let loss = bsde_forward(&r, &mut tape, &bf, &be)?;
    Ok(tape.scalar(loss))
}
