use serde::{Deserialize, Serialize};

use super::fields::{DecouplingFields, EmbedSet, FieldModel, FieldsAdam};
use super::problem::FbsdeProblem;
use super::simulate::{bsde_forward, BoundEmbeds, Rollout};
use crate::embed::train::DivergenceGuard;
use crate::error::{Error, Result};
use crate::nnkit::{LrSchedule, Tape};
use crate::pathsim::{generate_drivers, DriverBlock, DriverSpec, FeatureTable, TimeGrid};

/// Step-3 settings. Each SGD step rolls out `n2 x n1` fresh paths; the block
/// is redrawn every `regen_every` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsdeTrainConfig {
    pub steps: usize,
    pub n1: usize,
    pub n2: usize,
    pub regen_every: usize,
    pub schedule: LrSchedule,
}

/// Distinguishes the driver blocks drawn by different parts of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum BlockRole {
    Step1 = 1,
    Step3 = 2,
    Eval = 3,
    Embed = 4,
}

pub fn epoch_key(role: BlockRole, stage: usize, index: usize) -> u64 {
    ((role as u64) << 56) | ((stage as u64) << 28) | index as u64
}

/// Draw a block and its path features.
pub fn draw_block(
    problem: &dyn FbsdeProblem,
    grid: TimeGrid,
    n1: usize,
    n2: usize,
    features: crate::sigkit::FeatureSpec,
    seed: u64,
    epoch: u64,
) -> Result<(DriverBlock, FeatureTable)> {
    let d = problem.dims();
    let spec = DriverSpec {
        grid,
        q: d.q,
        dx: d.dx,
        n1,
        n2,
    };
    let block = generate_drivers(seed, epoch, &spec, &|r, o| problem.sample_initial(r, o))?;
    let feats = FeatureTable::from_block(&block, features.kind, features.depth)?;
    Ok((block, feats))
}

/// Adam on the deep-BSDE loss with the embeddings frozen. Returns the loss
/// trace (value before each update).
#[allow(clippy::too_many_arguments)]
pub fn train_bsde(
    problem: &dyn FbsdeProblem,
    fields: &mut DecouplingFields,
    embeds: &EmbedSet,
    grid: TimeGrid,
    cfg: &BsdeTrainConfig,
    adam: &mut FieldsAdam,
    seed: u64,
    stage: usize,
) -> Result<Vec<f64>> {
    if cfg.regen_every == 0 {
        return Err(Error::config("bsde.regen_every must be positive"));
    }
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut guard = DivergenceGuard::default();
    let mut current: Option<(DriverBlock, FeatureTable)> = None;
    for step in 0..cfg.steps {
        if step % cfg.regen_every == 0 {
            let epoch = epoch_key(BlockRole::Step3, stage, step / cfg.regen_every);
            current = Some(draw_block(problem, grid, cfg.n1, cfg.n2, fields.features, seed, epoch)?);
        }
        let (block, feats) = current.as_ref().expect("drawn at step 0");
        let model = FieldModel::Nets(fields);
        let r = Rollout::new(problem, model, embeds, block, feats, stage)?;
        let mut tape = Tape::new();
        let bf = model.bind(&mut tape, true);
        let be = BoundEmbeds::bind(problem, embeds, &mut tape);
        let loss = bsde_forward(&r, &mut tape, &bf, &be)?;
        let value = tape.scalar(loss);
        trace.push(value);
        if guard.observe(value) {
            return Err(Error::Training {
                stage,
                step,
                reason: format!("deep-BSDE loss diverged ({value:e})"),
                trace,
            });
        }
        let grads = tape.backward(loss)?;
        let [gu, gv, gv0] = bf.gradients(&tape, &grads).expect("network fields");
        let rate = cfg.schedule.rate(stage, step);
        let fail = |e: Error, trace: &Vec<f64>| Error::Training {
            stage,
            step,
            reason: format!("field update failed: {e}"),
            trace: trace.clone(),
        };
        adam.u.step(&mut fields.u, &gu, rate).map_err(|e| fail(e, &trace))?;
        adam.v.step(&mut fields.v, &gv, rate).map_err(|e| fail(e, &trace))?;
        adam.v0.step(&mut fields.v0, &gv0, rate).map_err(|e| fail(e, &trace))?;
    }
    Ok(trace)
}
