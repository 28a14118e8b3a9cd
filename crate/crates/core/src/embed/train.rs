use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::EmbedArch;
use super::targets::EmbedTarget;
use crate::error::{Error, Result};
use crate::nnkit::{AdamState, LrSchedule, Tape, Var};
use crate::pathsim::{stream, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedTrainConfig {
    pub steps: usize,
    /// Samples per SGD step; the whole data set when it is at least as large.
    pub batch_size: usize,
    pub schedule: LrSchedule,
}

/// Loss above this multiple of the initial loss for `DIVERGENCE_PATIENCE`
/// consecutive steps aborts training.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
pub const DIVERGENCE_PATIENCE: usize = 100;

/// Tracks the divergence rule shared by both trainers.
#[derive(Debug, Default)]
pub(crate) struct DivergenceGuard {
    initial: Option<f64>,
    over: usize,
}

impl DivergenceGuard {
    /// Returns `true` once the rule fires.
    pub(crate) fn observe(&mut self, loss: f64) -> bool {
        let init = *self.initial.get_or_insert(loss);
        if !loss.is_finite() {
            return true;
        }
        if loss > DIVERGENCE_FACTOR * init {
            self.over += 1;
        } else {
            self.over = 0;
        }
        self.over >= DIVERGENCE_PATIENCE
    }
}

fn mse_on_tape(tape: &mut Tape, arch: &EmbedArch, data: &EmbedTarget, rows: &[usize], trainable: bool) -> Result<(Var, crate::nnkit::BoundNet)> {
    let n = rows.len();
    let (dx, f, ell) = (data.dx, data.feat_dim, data.ell);
    let mut time = Vec::with_capacity(n);
    let mut state = Vec::with_capacity(n * dx);
    let mut feats = Vec::with_capacity(n * f);
    let mut target = Vec::with_capacity(n * ell);
    for &s in rows {
        time.push(data.time[s]);
        state.extend_from_slice(data.state_row(s));
        feats.extend_from_slice(data.feat_row(s));
        target.extend_from_slice(data.target_row(s));
    }
    let net = arch.net.bind(tape, trainable);
    let tv = tape.constant_from(n, 1, time);
    let sv = tape.constant_from(n, dx, state);
    let fv = tape.constant_from(n, f, feats);
    let yv = tape.constant_from(n, ell, target);
    let pred = arch.predict(tape, &net, tv, sv, fv)?;
    let diff = tape.sub(pred, yv)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok((tape.scale(total, 1.0 / n as f64), net))
}

/// Mean over samples of the squared Euclidean prediction error.
pub fn embed_loss(arch: &EmbedArch, data: &EmbedTarget) -> Result<f64> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in rows.chunks(4096) {
        let mut tape = Tape::new();
        let (loss, _) = mse_on_tape(&mut tape, arch, data, chunk, false)?;
        total += tape.scalar(loss) * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Fit `arch` to `data` with Adam. Returns the per-step minibatch loss trace
/// (loss before each update).
pub fn train_embed(
    arch: &mut EmbedArch,
    data: &EmbedTarget,
    cfg: &EmbedTrainConfig,
    adam: &mut AdamState,
    seed: u64,
    stage: usize,
) -> Result<Vec<f64>> {
    train_embed_from(arch, data, cfg, adam, seed, stage, 0)
}

/// [`train_embed`] continuing a schedule that already ran `first_step` steps.
#[allow(clippy::too_many_arguments)]
pub fn train_embed_from(
    arch: &mut EmbedArch,
    data: &EmbedTarget,
    cfg: &EmbedTrainConfig,
    adam: &mut AdamState,
    seed: u64,
    stage: usize,
    first_step: usize,
) -> Result<Vec<f64>> {
    let mut guard = DivergenceGuard::default();
    train_embed_guarded(arch, data, cfg, adam, seed, stage, first_step, &mut guard)
}

/// [`train_embed_from`] with a divergence count carried over from earlier calls.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_embed_guarded(
    arch: &mut EmbedArch,
    data: &EmbedTarget,
    cfg: &EmbedTrainConfig,
    adam: &mut AdamState,
    seed: u64,
    stage: usize,
    first_step: usize,
    guard: &mut DivergenceGuard,
) -> Result<Vec<f64>> {
    arch.validate()?;
    if arch.ell != data.ell || arch.state_dim != data.dx || arch.feat_dim != data.feat_dim {
        return Err(Error::config(format!(
            "{} targets are (ell {}, dx {}, F {}) but the network is (ell {}, dx {}, F {})",
            data.slot.name(),
            data.ell,
            data.dx,
            data.feat_dim,
            arch.ell,
            arch.state_dim,
            arch.feat_dim
        )));
    }
    if data.is_empty() {
        return Err(Error::usage("no training samples"));
    }
    let mut trace = Vec::with_capacity(cfg.steps);
    let full: Vec<usize> = (0..data.len()).collect();
    let mut rng = stream(seed, Purpose::Minibatch, stage as u64, data.slot.index() as u64, first_step as u64);
    let mut rows = Vec::with_capacity(cfg.batch_size.min(data.len()));
    for step in 0..cfg.steps {
        let batch: &[usize] = if cfg.batch_size >= data.len() {
            &full
        } else {
            rows.clear();
            rows.extend((0..cfg.batch_size).map(|_| rng.random_range(0..data.len())));
            &rows
        };
        let mut tape = Tape::new();
        let (loss, net) = mse_on_tape(&mut tape, arch, data, batch, true)?;
        let value = tape.scalar(loss);
        trace.push(value);
        if guard.observe(value) {
            return Err(Error::Training {
                stage,
                step: first_step + step,
                reason: format!("{} regression diverged (loss {value:e})", data.slot.name()),
                trace,
            });
        }
        let grads = tape.backward(loss)?;
        let g = net.gradients(&tape, &grads);
        adam.step(&mut arch.net, &g, cfg.schedule.rate(stage, first_step + step))
            .map_err(|e| Error::Training {
                stage,
                step: first_step + step,
                reason: format!("{}: {e}", data.slot.name()),
                trace: trace.clone(),
            })?;
    }
    Ok(trace)
}
