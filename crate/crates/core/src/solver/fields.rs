use rand::Rng;
use serde::{Deserialize, Serialize};

use super::problem::{Dims, FbsdeProblem, Slot};
use crate::embed::{EmbedArch, EmbedVariant};
use crate::error::{Error, Result};
use crate::nnkit::{Activation, AdamState, BoundNet, Gradients, NetGrads, NetParams, Tape, Var};
use crate::sigkit::FeatureSpec;

/// Networks standing in for `Y_0 = u(X_0)`, `Z_t = v(t, X_t, S)` and
/// `Z0_t = v0(t, X_t, S)`, with `S` the path features of the common noise.
///
/// `v` and `v0` output `dy * q` values: the `dy x q` matrix in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingFields {
    pub dims: Dims,
    pub features: FeatureSpec,
    pub u: NetParams,
    pub v: NetParams,
    pub v0: NetParams,
}

impl DecouplingFields {
    pub fn new<R: Rng + ?Sized>(
        dims: Dims,
        features: FeatureSpec,
        u_hidden: &[(usize, Activation)],
        z_hidden: &[(usize, Activation)],
        rng: &mut R,
    ) -> Self {
        let f = features.dim(dims.q);
        Self {
            dims,
            features,
            u: NetParams::glorot_layers(dims.dx, u_hidden, dims.dy, rng),
            v: NetParams::glorot_layers(1 + dims.dx + f, z_hidden, dims.dz(), rng),
            v0: NetParams::glorot_layers(1 + dims.dx + f, z_hidden, dims.dz(), rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        let zin = 1 + d.dx + self.features.dim(d.q);
        for (name, net, i, o) in [
            ("u", &self.u, d.dx, d.dy),
            ("v", &self.v, zin, d.dz()),
            ("v0", &self.v0, zin, d.dz()),
        ] {
            net.validate()?;
            if net.input_dim() != i || net.output_dim() != o {
                return Err(Error::config(format!(
                    "field {name} maps {} -> {}, expected {i} -> {o}",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        self.u.fingerprint() ^ self.v.fingerprint().rotate_left(21) ^ self.v0.fingerprint().rotate_left(42)
    }
}

/// Closed-form decoupling fields, used for oracle checks.
pub trait FieldOracle: Send + Sync {
    /// `Y_0` for one initial state.
    fn y0(&self, x0: &[f64], out: &mut [f64]);
    /// `Z` and `Z0` (row-major `dy x q`) at time `t` for one state.
    fn z(&self, t: f64, x: &[f64], z: &mut [f64], z0: &mut [f64]);
}

/// Fields that vanish identically (`Y = 0` unless driven).
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFields;

impl FieldOracle for ZeroFields {
    fn y0(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn z(&self, _: f64, _: &[f64], z: &mut [f64], z0: &mut [f64]) {
        z.fill(0.0);
        z0.fill(0.0);
    }
}

/// Source of `Y_0, Z, Z0` during a rollout.
#[derive(Clone, Copy)]
pub enum FieldModel<'a> {
    Nets(&'a DecouplingFields),
    Oracle(&'a dyn FieldOracle),
}

pub(crate) enum BoundFields<'a> {
    Nets { u: BoundNet, v: BoundNet, v0: BoundNet },
    Oracle(&'a dyn FieldOracle),
}

impl<'a> FieldModel<'a> {
    pub(crate) fn bind(self, tape: &mut Tape, trainable: bool) -> BoundFields<'a> {
        match self {
            FieldModel::Nets(f) => BoundFields::Nets {
                u: f.u.bind(tape, trainable),
                v: f.v.bind(tape, trainable),
                v0: f.v0.bind(tape, trainable),
            },
            FieldModel::Oracle(o) => BoundFields::Oracle(o),
        }
    }

    pub(crate) fn check(self, dims: Dims, features: Option<FeatureSpec>) -> Result<()> {
        if let FieldModel::Nets(f) = self {
            f.validate()?;
            if f.dims != dims {
                return Err(Error::config(format!(
                    "fields were built for {:?}, problem declares {:?}",
                    f.dims, dims
                )));
            }
            if features.is_some_and(|s| s != f.features) {
                return Err(Error::config("fields and embeddings use different path features"));
            }
        }
        Ok(())
    }
}

impl BoundFields<'_> {
    pub(crate) fn y0(&self, tape: &mut Tape, dims: Dims, x0: Var) -> Result<Var> {
        match self {
            BoundFields::Nets { u, .. } => u.forward(tape, x0),
            BoundFields::Oracle(o) => {
                let (b, xv) = (tape.rows(x0), tape.value(x0).to_vec());
                let mut out = vec![0.0; b * dims.dy];
                for (x, y) in xv.chunks(dims.dx).zip(out.chunks_mut(dims.dy)) {
                    o.y0(x, y);
                }
                Ok(tape.constant_from(b, dims.dy, out))
            }
        }
    }

    pub(crate) fn z(&self, tape: &mut Tape, dims: Dims, t: f64, x: Var, feats: Var) -> Result<(Var, Var)> {
        match self {
            BoundFields::Nets { v, v0, .. } => {
                let b = tape.rows(x);
                let tcol = tape.full(b, 1, t);
                let input = tape.concat(&[tcol, x, feats])?;
                Ok((v.forward(tape, input)?, v0.forward(tape, input)?))
            }
            BoundFields::Oracle(o) => {
                let (b, xv) = (tape.rows(x), tape.value(x).to_vec());
                let dz = dims.dz();
                let mut z = vec![0.0; b * dz];
                let mut z0 = vec![0.0; b * dz];
                for ((xr, zr), z0r) in xv.chunks(dims.dx).zip(z.chunks_mut(dz)).zip(z0.chunks_mut(dz)) {
                    o.z(t, xr, zr, z0r);
                }
                Ok((tape.constant_from(b, dz, z), tape.constant_from(b, dz, z0)))
            }
        }
    }

    pub(crate) fn gradients(&self, tape: &Tape, grads: &Gradients) -> Option<[NetGrads; 3]> {
        match self {
            BoundFields::Nets { u, v, v0 } => Some([
                u.gradients(tape, grads),
                v.gradients(tape, grads),
                v0.gradients(tape, grads),
            ]),
            BoundFields::Oracle(_) => None,
        }
    }
}

/// One Adam state per field network.
#[derive(Clone, Debug)]
pub struct FieldsAdam {
    pub u: AdamState,
    pub v: AdamState,
    pub v0: AdamState,
}

impl FieldsAdam {
    pub fn new(fields: &DecouplingFields) -> Self {
        Self {
            u: AdamState::new(&fields.u),
            v: AdamState::new(&fields.v),
            v0: AdamState::new(&fields.v0),
        }
    }
}

/// Where `m_i` comes from during a rollout.
#[derive(Clone, Debug, Default)]
pub enum EmbedSource {
    /// `m_i ≡ 0`.
    #[default]
    Zero,
    Learned(EmbedArch),
    /// The problem's exact `m_i` applied to the rollout's own particle cloud at
    /// each node. Needs the full `N1` block, so only meaningful for Step-1 style
    /// rollouts.
    Empirical,
}

/// `m1..m5`, indexed by [`Slot`].
#[derive(Clone, Debug, Default)]
pub struct EmbedSet {
    slots: [EmbedSource; 5],
}

/// Architecture of the learned embeddings of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedShape {
    pub variant: EmbedVariant,
    pub features: FeatureSpec,
    pub hidden: Vec<(usize, Activation)>,
}

impl EmbedSet {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Exact embeddings on the simulated clouds for every active slot.
    pub fn empirical(problem: &dyn FbsdeProblem) -> Self {
        let mut s = Self::zero();
        for slot in problem.active_slots() {
            s.set(slot, EmbedSource::Empirical);
        }
        s
    }

    /// Freshly initialized networks for every active slot.
    pub fn learned<R: Rng + ?Sized>(problem: &dyn FbsdeProblem, shape: &EmbedShape, rng: &mut R) -> Self {
        let d = problem.dims();
        let mut s = Self::zero();
        for slot in problem.active_slots() {
            let arch = EmbedArch::with_layers(shape.variant, shape.features, d.q, d.dx, d.ell, &shape.hidden, rng);
            s.set(slot, EmbedSource::Learned(arch));
        }
        s
    }

    pub fn get(&self, slot: Slot) -> &EmbedSource {
        &self.slots[slot.index()]
    }

    pub fn set(&mut self, slot: Slot, src: EmbedSource) {
        self.slots[slot.index()] = src;
    }

    pub fn arch(&self, slot: Slot) -> Option<&EmbedArch> {
        match &self.slots[slot.index()] {
            EmbedSource::Learned(a) => Some(a),
            _ => None,
        }
    }

    pub fn arch_mut(&mut self, slot: Slot) -> Option<&mut EmbedArch> {
        match &mut self.slots[slot.index()] {
            EmbedSource::Learned(a) => Some(a),
            _ => None,
        }
    }

    /// Feature spec shared by the learned slots; configuration error if they disagree.
    pub fn features(&self) -> Result<Option<FeatureSpec>> {
        let mut found: Option<FeatureSpec> = None;
        for a in Slot::ALL.iter().filter_map(|s| self.arch(*s)) {
            let spec = FeatureSpec {
                kind: a.feature,
                depth: a.depth,
            };
            if found.is_some_and(|f| f != spec) {
                return Err(Error::config("learned embeddings use different path features"));
            }
            found = Some(spec);
        }
        Ok(found)
    }

    pub fn fingerprint(&self) -> u64 {
        Slot::ALL
            .iter()
            .filter_map(|s| self.arch(*s))
            .fold(0, |h, a| h.rotate_left(13) ^ a.net.fingerprint())
    }
}
