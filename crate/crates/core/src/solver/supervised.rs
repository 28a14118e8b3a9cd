use serde::{Deserialize, Serialize};

use super::bsde::{draw_block, epoch_key, BlockRole};
use super::fields::{EmbedSet, FieldModel, ZeroFields};
use super::problem::{FbsdeProblem, Slot};
use super::simulate::simulate;
use crate::embed::train::{train_embed_guarded, DivergenceGuard};
use crate::embed::{compute_targets, embed_loss, EmbedArch, EmbedTrainConfig};
use crate::error::{Error, Result};
use crate::nnkit::AdamState;
use crate::pathsim::TimeGrid;
use crate::sigkit::FeatureSpec;

/// Settings for fitting one embedding on its own, without the backward
/// equation. Every epoch simulates a fresh `n2 x n1` block and takes
/// `train.steps` minibatch steps on its targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedConfig {
    pub grid: TimeGrid,
    pub n1: usize,
    pub n2: usize,
    pub epochs: usize,
    pub train: EmbedTrainConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SupervisedOutcome {
    /// Minibatch loss before every update, all epochs concatenated.
    pub trace: Vec<f64>,
    /// Full-data loss on each epoch's block after its updates.
    pub epoch_loss: Vec<f64>,
}

/// Fit `arch` to the exact `slot` embedding over all nodes `0..=N_T`.
///
/// The forward equation is simulated with zero decoupling fields, so this is
/// only meaningful for problems whose state does not depend on `Y` or `Z`.
/// The learning-rate schedule runs across epochs; `observer` sees the network
/// after each one.
pub fn fit_embedding(
    problem: &dyn FbsdeProblem,
    slot: Slot,
    arch: &mut EmbedArch,
    cfg: &SupervisedConfig,
    observer: &mut dyn FnMut(usize, &EmbedArch) -> Result<()>,
) -> Result<SupervisedOutcome> {
    cfg.grid.validate()?;
    if cfg.epochs == 0 {
        return Err(Error::config("epochs must be positive"));
    }
    if !problem.is_active(slot) {
        return Err(Error::config(format!("{} does not use {}", problem.name(), slot.name())));
    }
    arch.validate()?;
    let features = FeatureSpec {
        kind: arch.feature,
        depth: arch.depth,
    };
    let embeds = EmbedSet::zero();
    let mut adam = AdamState::new(&arch.net);
    let mut out = SupervisedOutcome::default();
    let mut guard = DivergenceGuard::default();
    for epoch in 0..cfg.epochs {
        let key = epoch_key(BlockRole::Embed, 0, epoch);
        let (block, feats) = draw_block(problem, cfg.grid, cfg.n1, cfg.n2, features, cfg.seed, key)?;
        let sim = simulate(problem, FieldModel::Oracle(&ZeroFields), &embeds, &block, &feats, 0)?;
        let data = compute_targets(problem, slot, &sim.ensemble()?, &feats, &cfg.grid, 0..cfg.grid.n_steps + 1)?;
        let first = epoch * cfg.train.steps;
        let trace = train_embed_guarded(arch, &data, &cfg.train, &mut adam, cfg.seed, 0, first, &mut guard)?;
        out.trace.extend(trace);
        out.epoch_loss.push(embed_loss(arch, &data)?);
        observer(epoch, arch)?;
    }
    Ok(out)
}
