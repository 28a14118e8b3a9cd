use std::ops::Range;

use crate::error::{Error, Result};
use crate::pathsim::{CondEnsemble, FeatureTable, TimeGrid};
use crate::solver::problem::{FbsdeProblem, Particle, Slot};

/// Supervised-learning samples for one embedding: inputs `(t, x, features)`
/// and the exact embedding evaluated on the empirical conditional law.
///
/// Samples are ordered node-major, then by common path, then by particle.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedTarget {
    pub slot: Slot,
    pub ell: usize,
    pub dx: usize,
    pub feat_dim: usize,
    pub time: Vec<f64>,
    /// `[S x dx]`
    pub state: Vec<f64>,
    /// `[S x F]`
    pub feats: Vec<f64>,
    /// `[S x ell]`
    pub target: Vec<f64>,
}

impl EmbedTarget {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn target_row(&self, s: usize) -> &[f64] {
        &self.target[s * self.ell..(s + 1) * self.ell]
    }

    pub fn state_row(&self, s: usize) -> &[f64] {
        &self.state[s * self.dx..(s + 1) * self.dx]
    }

    pub fn feat_row(&self, s: usize) -> &[f64] {
        &self.feats[s * self.feat_dim..(s + 1) * self.feat_dim]
    }

    pub fn with_features(&self, feats: Vec<f64>) -> Self {
        assert_eq!(feats.len(), self.feats.len());
        Self { feats, ..self.clone() }
    }
}

/// Node range the targets of `slot` live on: `0..N_T` for `m1..m4`, the
/// terminal node alone for `m5`.
pub fn default_nodes(slot: Slot, grid: &TimeGrid) -> Range<usize> {
    if slot.is_terminal() {
        grid.n_steps..grid.n_steps + 1
    } else {
        0..grid.n_steps
    }
}

/// Evaluate the exact `m_i` of every particle against its own conditional
/// cloud. Costs `O(N1)` exact-embedding calls per particle.
pub fn compute_targets(
    problem: &dyn FbsdeProblem,
    slot: Slot,
    ens: &CondEnsemble,
    feats: &FeatureTable,
    grid: &TimeGrid,
    nodes: Range<usize>,
) -> Result<EmbedTarget> {
    let dims = problem.dims();
    if ens.dx() != dims.dx || ens.dy() != dims.dy {
        return Err(Error::config(format!(
            "ensemble carries (dx {}, dy {}) but problem declares ({}, {})",
            ens.dx(),
            ens.dy(),
            dims.dx,
            dims.dy
        )));
    }
    if feats.n2() != ens.n2() || nodes.end > ens.n_nodes() {
        return Err(Error::config("feature table and ensemble disagree on paths or nodes"));
    }
    let (ell, dx, f) = (dims.ell, dims.dx, feats.dim());
    let samples = nodes.len() * ens.n2() * ens.n1();
    let mut out = EmbedTarget {
        slot,
        ell,
        dx,
        feat_dim: f,
        time: Vec::with_capacity(samples),
        state: Vec::with_capacity(samples * dx),
        feats: Vec::with_capacity(samples * f),
        target: vec![0.0; samples * ell],
    };
    let mut s = 0;
    for node in nodes {
        let t = grid.time(node);
        for j2 in 0..ens.n2() {
            let cloud = ens.cloud(node, j2);
            let fv = feats.get(j2, node);
            for j1 in 0..ens.n1() {
                let query = Particle {
                    x: cloud.x(j1),
                    y: cloud.y(j1),
                };
                problem.exact_embedding(slot, t, query, &cloud, &mut out.target[s * ell..(s + 1) * ell]);
                out.time.push(t);
                out.state.extend_from_slice(query.x);
                out.feats.extend_from_slice(fv);
                s += 1;
            }
        }
    }
    if let Some(bad) = out.target.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite {} target at sample {}", slot.name(), bad / ell)));
    }
    Ok(out)
}
