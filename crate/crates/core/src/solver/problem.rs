use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nnkit::{Tape, Var};
use crate::pathsim::{Cloud, StreamRng};

/// Which measure embedding a function refers to: `m1` (drift), `m2`
/// (idiosyncratic volatility), `m3` (common volatility), `m4` (driver),
/// `m5` (terminal condition).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl Slot {
    pub const ALL: [Slot; 5] = [Slot::M1, Slot::M2, Slot::M3, Slot::M4, Slot::M5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["m1", "m2", "m3", "m4", "m5"][self.index()]
    }

    pub fn is_terminal(self) -> bool {
        self == Slot::M5
    }
}

/// State dimension `dx`, backward dimension `dy`, noise dimension `q`,
/// embedding dimension `ell`. `Z` and `Z0` are `dy x q` matrices stored
/// row-major in `dy * q` columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub dx: usize,
    pub dy: usize,
    pub q: usize,
    pub ell: usize,
}

impl Dims {
    pub fn dz(&self) -> usize {
        self.dy * self.q
    }
}

/// Batched state at one node, as tape handles. `x: [B x dx]`, `y: [B x dy]`,
/// `z, z0: [B x dy*q]`.
#[derive(Clone, Copy, Debug)]
pub struct NodeState {
    pub t: f64,
    pub x: Var,
    pub y: Var,
    pub z: Var,
    pub z0: Var,
}

/// One particle's state, used as the query point of an exact embedding.
#[derive(Clone, Copy, Debug)]
pub struct Particle<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
}

/// Coefficients of a conditional McKean-Vlasov FBSDE whose law dependence
/// passes through the embeddings `m1..m5`.
///
/// Coefficient methods build their output on the tape so gradients can flow
/// through them during deep-BSDE training. The embedding argument is `None`
/// exactly when the corresponding slot is inactive.
pub trait FbsdeProblem: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    fn horizon(&self) -> f64;

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]);

    /// Whether `m_i` is used at all (inactive slots are identically zero).
    fn is_active(&self, slot: Slot) -> bool;

    /// `b(t, Θ, z0, m1)`, `[B x dx]`.
    fn drift(&self, tape: &mut Tape, s: &NodeState, m1: Option<Var>) -> Result<Var>;

    /// `σ(t, Θ, m2) ΔW`, `[B x dx]`.
    fn diffusion(&self, tape: &mut Tape, s: &NodeState, m2: Option<Var>, dw: Var) -> Result<Var>;

    /// `σ0(t, Θ, m3) ΔW0`, `[B x dx]`.
    fn common_diffusion(&self, tape: &mut Tape, s: &NodeState, m3: Option<Var>, dw0: Var) -> Result<Var>;

    /// `h(t, Θ, z0, m4)`, `[B x dy]`; the backward equation is `dY = -h dt + Z dW + Z0 dW0`.
    fn driver(&self, tape: &mut Tape, s: &NodeState, m4: Option<Var>) -> Result<Var>;

    /// `g(x, m5)`, `[B x dy]`.
    fn terminal(&self, tape: &mut Tape, x: Var, m5: Option<Var>) -> Result<Var>;

    /// Exact `m_i(t, query, ν)` with `ν` the uniform measure on `cloud`.
    fn exact_embedding(&self, slot: Slot, t: f64, query: Particle<'_>, cloud: &Cloud<'_>, out: &mut [f64]);

    fn active_slots(&self) -> Vec<Slot> {
        Slot::ALL.into_iter().filter(|s| self.is_active(*s)).collect()
    }
}
