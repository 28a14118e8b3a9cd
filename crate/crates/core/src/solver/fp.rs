use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bsde::{draw_block, epoch_key, train_bsde, BlockRole, BsdeTrainConfig};
use super::fields::{DecouplingFields, EmbedSet, FieldModel, FieldsAdam};
use super::problem::{FbsdeProblem, Slot};
use super::simulate::{simulate, SimOutput};
use crate::embed::{compute_targets, default_nodes, embed_loss, train_embed, EmbedTrainConfig};
use crate::error::{Error, Result};
use crate::nnkit::AdamState;
use crate::pathsim::{DriverBlock, TimeGrid};

/// Mean Euclidean errors of the four processes against an oracle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mee {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub z0: f64,
}

/// Compares an evaluation rollout with reference trajectories driven by the same noise.
pub trait StageEvaluator {
    fn evaluate(&self, block: &DriverBlock, sim: &SimOutput) -> Result<Mee>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpConfig {
    pub stages: usize,
    pub grid: TimeGrid,
    /// Step-1 ensemble size.
    pub n1: usize,
    pub n2: usize,
    pub embed_train: EmbedTrainConfig,
    pub bsde_train: BsdeTrainConfig,
    /// Evaluation rollout size, drawn fresh after every stage.
    pub eval_n1: usize,
    pub eval_n2: usize,
    pub seed: u64,
}

/// Metrics of one completed stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    /// Sum over the learned slots of the final full-data regression loss.
    pub embed_loss: f64,
    /// Terminal loss of the evaluation rollout.
    pub bsde_loss: f64,
    pub mee: Option<Mee>,
    pub embed_traces: Vec<(Slot, Vec<f64>)>,
    pub bsde_trace: Vec<f64>,
    pub wall_seconds: f64,
}

/// Networks and evaluation rollout handed to the observer after each stage.
pub struct StageView<'a> {
    pub record: &'a StageRecord,
    pub fields: &'a DecouplingFields,
    pub embeds: &'a EmbedSet,
    pub eval_block: &'a DriverBlock,
    pub eval_sim: &'a SimOutput,
}

pub struct FpOutcome {
    pub records: Vec<StageRecord>,
    pub fields: DecouplingFields,
    pub embeds: EmbedSet,
}

/// Run `cfg.stages` rounds of simulate -> fit embeddings -> deep BSDE.
///
/// Stage `k` simulates with the networks left by stage `k - 1` (the initial
/// ones for `k = 1`), then updates the embeddings on that sample and finally
/// the fields with the new embeddings frozen.
pub fn fictitious_play(
    problem: &dyn FbsdeProblem,
    cfg: &FpConfig,
    mut fields: DecouplingFields,
    mut embeds: EmbedSet,
    evaluator: Option<&dyn StageEvaluator>,
    observer: &mut dyn FnMut(StageView<'_>) -> Result<()>,
) -> Result<FpOutcome> {
    cfg.grid.validate()?;
    if cfg.stages == 0 {
        return Err(Error::config("stages must be positive"));
    }
    let features = fields.features;
    if embeds.features()?.is_some_and(|s| s != features) {
        return Err(Error::config("fields and embeddings use different path features"));
    }
    let learned: Vec<Slot> = Slot::ALL.into_iter().filter(|s| embeds.arch(*s).is_some()).collect();
    let mut records = Vec::with_capacity(cfg.stages);
    for stage in 1..=cfg.stages {
        let started = Instant::now();

        let mut embed_traces = Vec::new();
        let mut embed_total = 0.0;
        if !learned.is_empty() {
            let (block, feats) = draw_block(
                problem,
                cfg.grid,
                cfg.n1,
                cfg.n2,
                features,
                cfg.seed,
                epoch_key(BlockRole::Step1, stage, 0),
            )?;
            let sim = simulate(problem, FieldModel::Nets(&fields), &embeds, &block, &feats, stage)?;
            let ens = sim.ensemble()?;
            for &slot in &learned {
                let data = compute_targets(problem, slot, &ens, &feats, &cfg.grid, default_nodes(slot, &cfg.grid))?;
                let arch = embeds.arch_mut(slot).expect("learned slot");
                let mut adam = AdamState::new(&arch.net);
                let trace = train_embed(arch, &data, &cfg.embed_train, &mut adam, cfg.seed, stage)?;
                embed_total += embed_loss(arch, &data)?;
                embed_traces.push((slot, trace));
            }
        }

        let mut adam = FieldsAdam::new(&fields);
        let bsde_trace = train_bsde(
            problem,
            &mut fields,
            &embeds,
            cfg.grid,
            &cfg.bsde_train,
            &mut adam,
            cfg.seed,
            stage,
        )?;

        let (eval_block, eval_feats) = draw_block(
            problem,
            cfg.grid,
            cfg.eval_n1,
            cfg.eval_n2,
            features,
            cfg.seed,
            epoch_key(BlockRole::Eval, stage, 0),
        )?;
        let eval_sim = simulate(problem, FieldModel::Nets(&fields), &embeds, &eval_block, &eval_feats, stage)?;
        let mee = evaluator.map(|e| e.evaluate(&eval_block, &eval_sim)).transpose()?;
        let record = StageRecord {
            stage,
            embed_loss: embed_total,
            bsde_loss: eval_sim.terminal_loss(),
            mee,
            embed_traces,
            bsde_trace,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        observer(StageView {
            record: &record,
            fields: &fields,
            embeds: &embeds,
            eval_block: &eval_block,
            eval_sim: &eval_sim,
        })?;
        records.push(record);
    }
    Ok(FpOutcome {
        records,
        fields,
        embeds,
    })
}
