use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{hidden, BenchmarkName, RunConfig};
use crate::benchmarks::{AnalyticMvFbsde, Flocking, GaussianKernel, Mat};
use crate::embed::{compute_targets, default_nodes, mae_at_time, time_average, EmbedArch, EmbedTrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{mee_curve, write_metric_rows, MetricRow};
use crate::nnkit::checkpoint::{self, write_atomic};
use crate::pathsim::{stream, DriverBlock, Purpose};
use crate::pathsim::TimeGrid;
use crate::sigkit::FeatureSpec;
use crate::solver::{
    draw_block, epoch_key, fictitious_play, fit_embedding, simulate, BlockRole, FieldModel, DecouplingFields, EmbedSet, EmbedShape, FbsdeProblem, FpConfig, SimOutput, Slot,
    StageEvaluator, StageRecord, SupervisedConfig,
};

/// Common paths of the flocking embedding reference; each costs `O(N1^2)` per node.
const REFERENCE_N2: usize = 1;

/// Epoch key of the held-out set of a standalone fit; disjoint from training blocks.
const HELD_OUT_EPOCH: u64 = u64::MAX;

/// Flocking diagnostics of one stage's evaluation rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct FlockingDiagnostics {
    /// Learned `Y2` against the LQ ansatz; `None` when `β > 0`.
    pub y2_error: Option<f64>,
    pub z0_velocity: f64,
    pub mean_velocity_error: f64,
    /// `[n2][d]` terminal velocity standard deviations.
    pub terminal_spread: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSummary {
    pub record: StageRecord,
    pub flocking: Option<FlockingDiagnostics>,
}

#[allow(clippy::large_enum_variant)]
pub enum RunOutcome {
    Supervised {
        mae_curve: Vec<f64>,
        mae: f64,
        epoch_loss: Vec<f64>,
        arch: EmbedArch,
    },
    Fictitious {
        stages: Vec<StageSummary>,
        fields: DecouplingFields,
        embeds: EmbedSet,
    },
}

pub struct RunReport {
    pub run_id: String,
    pub dir: PathBuf,
    pub outcome: RunOutcome,
}

impl RunConfig {
    pub fn flocking_problem(&self) -> Result<Flocking> {
        let f = self
            .flocking
            .as_ref()
            .ok_or_else(|| Error::config("flocking: section missing"))?;
        let d = self.d;
        Flocking::new(
            d,
            f.beta,
            Mat::scaled_identity(d, f.r),
            Mat::scaled_identity(d, f.q),
            Mat::scaled_identity(d, f.c),
            Mat::scaled_identity(d, f.dd),
            vec![1.0; d],
            self.grid.horizon,
        )
    }

    pub fn fp_config(&self) -> Result<FpConfig> {
        let f = self
            .fictitious_play
            .as_ref()
            .ok_or_else(|| Error::config("fictitious_play: section missing"))?;
        Ok(FpConfig {
            stages: f.stages,
            grid: self.grid,
            n1: f.n1,
            n2: f.n2,
            embed_train: f.embed.clone(),
            bsde_train: f.bsde.clone(),
            eval_n1: f.eval_n1,
            eval_n2: f.eval_n2,
            seed: self.seed,
        })
    }
}

#[derive(Serialize)]
struct ErrorManifest<'a> {
    run_id: &'a str,
    kind: &'a str,
    message: String,
    stage: Option<usize>,
    step: Option<usize>,
}

/// Execute `cfg`, writing every artifact under `output_dir/run_id`. On
/// failure the partial artifacts stay and `error.json` describes the error.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let run_id = cfg.run_id();
    let dir = cfg.output_dir.join(&run_id);
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(dir.join("error.json"));
    write_atomic(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let result = match cfg.benchmark {
        BenchmarkName::GaussianKernel => run_supervised(cfg, &dir),
        _ => run_fictitious(cfg, &dir),
    };
    match result {
        Ok(outcome) => Ok(RunReport { run_id, dir, outcome }),
        Err(e) => {
            let (kind, stage, step) = match &e {
                Error::Config(_) => ("config", None, None),
                Error::Training { stage, step, .. } => ("training", Some(*stage), Some(*step)),
                Error::Simulation { stage, .. } => ("simulation", Some(*stage), None),
                Error::Io(_) | Error::Csv(_) => ("io", None, None),
                _ => ("runtime", None, None),
            };
            let manifest = ErrorManifest {
                run_id: &run_id,
                kind,
                message: e.to_string(),
                stage,
                step,
            };
            if let Ok(text) = serde_json::to_string_pretty(&manifest) {
                let _ = write_atomic(&dir.join("error.json"), text.as_bytes());
            }
            Err(e)
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

#[derive(Serialize)]
struct MaeRow {
    seed: u64,
    time_index: usize,
    t: f64,
    mae: f64,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    stage: usize,
    phase: &'a str,
    step: usize,
    loss: f64,
}

#[derive(Serialize)]
struct TimingRow {
    stage: usize,
    wall_seconds: f64,
}

fn run_supervised(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let s = cfg.supervised.as_ref().expect("validated");
    let started = Instant::now();
    let problem = GaussianKernel {
        q: cfg.d,
        horizon: cfg.grid.horizon,
    };
    let mut rng = stream(cfg.seed, Purpose::NetworkInit, 0, 0, 0);
    let mut arch = EmbedArch::with_layers(
        cfg.embedding.variant,
        cfg.signature,
        cfg.q,
        cfg.d,
        1,
        &hidden(&cfg.embedding.layers),
        &mut rng,
    );
    let sup = SupervisedConfig {
        grid: cfg.grid,
        n1: s.n1,
        n2: s.n2,
        epochs: s.epochs,
        train: EmbedTrainConfig {
            steps: s.steps_per_epoch,
            batch_size: s.batch_size,
            schedule: s.schedule.clone(),
        },
        seed: cfg.seed,
    };
    let fit = fit_embedding(&problem, Slot::M1, &mut arch, &sup, &mut |_, _| Ok(()))?;

    let mut w = csv_writer(&dir.join("loss_trace.csv"))?;
    for (step, loss) in fit.trace.iter().enumerate() {
        w.serialize(TraceRow {
            stage: 0,
            phase: "m1",
            step,
            loss: *loss,
        })?;
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join("epoch_loss.csv"))?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in fit.epoch_loss.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush()?;

    let eval = problem.eval_set(cfg.grid, cfg.signature, s.eval_rows, cfg.seed, HELD_OUT_EPOCH)?;
    let curve = mae_at_time(&arch, &eval)?;
    let mae = time_average(&curve);
    let mut w = csv_writer(&dir.join("mae_curve.csv"))?;
    for (i, m) in curve.iter().enumerate() {
        w.serialize(MaeRow {
            seed: cfg.seed,
            time_index: i,
            t: cfg.grid.time(i),
            mae: *m,
        })?;
    }
    w.flush()?;
    let rows = [MetricRow {
        run_id: cfg.run_id(),
        seed: cfg.seed,
        stage: 0,
        metric: "mae".into(),
        time_index: None,
        value: mae,
    }];
    write_metric_rows(fs::File::create(dir.join("metrics.csv"))?, &rows)?;

    let ckpt = dir.join("final");
    fs::create_dir_all(&ckpt)?;
    checkpoint::save(&arch.net, &ckpt.join("m1.json"))?;
    let mut w = csv_writer(&dir.join("timings.csv"))?;
    w.serialize(TimingRow {
        stage: 0,
        wall_seconds: started.elapsed().as_secs_f64(),
    })?;
    w.flush()?;
    Ok(RunOutcome::Supervised {
        mae_curve: curve,
        mae,
        epoch_loss: fit.epoch_loss,
        arch,
    })
}

#[derive(Serialize)]
struct StageRow {
    stage: usize,
    embed_loss: f64,
    bsde_loss: f64,
    mee_x: Option<f64>,
    mee_y: Option<f64>,
    mee_z: Option<f64>,
    mee_z0: Option<f64>,
    seed: u64,
}

#[derive(Serialize)]
struct FlockingRow {
    stage: usize,
    y2_error: Option<f64>,
    z0_velocity: f64,
    mean_velocity_error: f64,
    terminal_spread: f64,
    seed: u64,
}

#[derive(Serialize)]
struct CurveRow {
    stage: usize,
    time_index: usize,
    t: f64,
    x: f64,
    y: f64,
    z: Option<f64>,
    z0: Option<f64>,
}

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    row: usize,
    time_index: usize,
    t: f64,
    process: &'a str,
    component: usize,
    learned: f64,
    reference: Option<f64>,
}

#[derive(Serialize)]
struct DensityRow {
    common_path: usize,
    coordinate: usize,
    bin_low: f64,
    bin_high: f64,
    density: f64,
}

/// Problem plus its optional oracle, chosen by benchmark name.
enum Bench {
    Analytic(AnalyticMvFbsde),
    Flocking(Flocking),
}

impl Bench {
    fn problem(&self) -> &dyn FbsdeProblem {
        match self {
            Bench::Analytic(p) => p,
            Bench::Flocking(p) => p,
        }
    }

    fn evaluator(&self) -> Option<&dyn StageEvaluator> {
        match self {
            Bench::Analytic(p) => Some(p),
            Bench::Flocking(p) if p.beta == 0.0 => Some(p),
            Bench::Flocking(_) => None,
        }
    }

    fn reference(&self, block: &DriverBlock) -> Result<Option<[Vec<Vec<f64>>; 4]>> {
        match self {
            Bench::Analytic(p) => Ok(Some(p.reference(block))),
            Bench::Flocking(p) if p.beta == 0.0 => p.lq_reference(block).map(Some),
            Bench::Flocking(_) => Ok(None),
        }
    }
}

struct Writers {
    stages: csv::Writer<fs::File>,
    traces: csv::Writer<fs::File>,
    timings: csv::Writer<fs::File>,
    curves: csv::Writer<fs::File>,
    flocking: Option<csv::Writer<fs::File>>,
}

fn run_fictitious(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let bench = match cfg.benchmark {
        BenchmarkName::AnalyticMvfbsde => Bench::Analytic(AnalyticMvFbsde {
            d: cfg.d,
            horizon: cfg.grid.horizon,
        }),
        BenchmarkName::Flocking => Bench::Flocking(cfg.flocking_problem()?),
        BenchmarkName::GaussianKernel => unreachable!("handled by run_supervised"),
    };
    let problem = bench.problem();
    let fp = cfg.fp_config()?;
    let fs_cfg = cfg.fields.as_ref().expect("validated");
    let mut rng = stream(cfg.seed, Purpose::NetworkInit, 0, 0, 0);
    let fields = DecouplingFields::new(
        problem.dims(),
        cfg.signature,
        &hidden(&fs_cfg.u_layers),
        &hidden(&fs_cfg.z_layers),
        &mut rng,
    );
    let shape = EmbedShape {
        variant: cfg.embedding.variant,
        features: cfg.signature,
        hidden: hidden(&cfg.embedding.layers),
    };
    let embeds = EmbedSet::learned(problem, &shape, &mut rng);

    let mut out = Writers {
        stages: csv_writer(&dir.join("stage_metrics.csv"))?,
        traces: csv_writer(&dir.join("loss_traces.csv"))?,
        timings: csv_writer(&dir.join("timings.csv"))?,
        curves: csv_writer(&dir.join("mee_curve.csv"))?,
        flocking: match bench {
            Bench::Flocking(_) => Some(csv_writer(&dir.join("flocking_metrics.csv"))?),
            Bench::Analytic(_) => None,
        },
    };
    let mut summaries = Vec::new();
    let n_stages = fp.stages;
    let rows = cfg.fictitious_play.as_ref().map_or(0, |f| f.trajectory_rows);
    let outcome = fictitious_play(problem, &fp, fields, embeds, bench.evaluator(), &mut |view| {
        let r = view.record;
        let ckpt = dir.join(format!("stage_{}", r.stage));
        fs::create_dir_all(&ckpt)?;
        checkpoint::save(&view.fields.u, &ckpt.join("u.json"))?;
        checkpoint::save(&view.fields.v, &ckpt.join("v.json"))?;
        checkpoint::save(&view.fields.v0, &ckpt.join("v0.json"))?;
        for slot in Slot::ALL {
            if let Some(a) = view.embeds.arch(slot) {
                checkpoint::save(&a.net, &ckpt.join(format!("{}.json", slot.name())))?;
            }
        }

        let check = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Data(format!("{what} at stage {} is not finite", r.stage)))
            }
        };
        out.stages.serialize(StageRow {
            stage: r.stage,
            embed_loss: check(r.embed_loss, "embed_loss")?,
            bsde_loss: check(r.bsde_loss, "bsde_loss")?,
            mee_x: r.mee.map(|m| m.x),
            mee_y: r.mee.map(|m| m.y),
            mee_z: r.mee.map(|m| m.z),
            mee_z0: r.mee.map(|m| m.z0),
            seed: cfg.seed,
        })?;
        out.stages.flush()?;
        for (slot, trace) in &r.embed_traces {
            for (step, loss) in trace.iter().enumerate() {
                out.traces.serialize(TraceRow {
                    stage: r.stage,
                    phase: slot.name(),
                    step,
                    loss: *loss,
                })?;
            }
        }
        for (step, loss) in r.bsde_trace.iter().enumerate() {
            out.traces.serialize(TraceRow {
                stage: r.stage,
                phase: "bsde",
                step,
                loss: *loss,
            })?;
        }
        out.traces.flush()?;
        out.timings.serialize(TimingRow {
            stage: r.stage,
            wall_seconds: r.wall_seconds,
        })?;
        out.timings.flush()?;

        let reference = bench.reference(view.eval_block)?;
        if let Some(refs) = &reference {
            write_curves(&mut out.curves, r.stage, view.eval_block, view.eval_sim, refs)?;
        }
        let diag = match &bench {
            Bench::Flocking(p) => Some(flocking_diagnostics(p, view.eval_block, view.eval_sim)?),
            Bench::Analytic(_) => None,
        };
        if let (Some(w), Some(d)) = (out.flocking.as_mut(), &diag) {
            let spread = d.terminal_spread.iter().flatten().sum::<f64>()
                / d.terminal_spread.iter().map(Vec::len).sum::<usize>().max(1) as f64;
            w.serialize(FlockingRow {
                stage: r.stage,
                y2_error: d.y2_error,
                z0_velocity: d.z0_velocity,
                mean_velocity_error: d.mean_velocity_error,
                terminal_spread: spread,
                seed: cfg.seed,
            })?;
            w.flush()?;
        }
        if r.stage == n_stages {
            write_trajectories(&dir.join("trajectories.csv"), view.eval_block, view.eval_sim, reference.as_ref(), rows)?;
            if let Bench::Flocking(p) = &bench {
                write_density(&dir.join("density.csv"), p.d, view.eval_sim)?;
                let key = epoch_key(BlockRole::Eval, r.stage, 0);
                let n1 = cfg.flocking.as_ref().map_or(2, |f| f.reference_n1);
                let n2 = fp.eval_n2.min(REFERENCE_N2);
                let curves =
                    reference_embed_mae(p, view.fields, view.embeds, fp.grid, cfg.signature, cfg.seed, key, n1, n2)?;
                let mut w = csv_writer(&dir.join("embed_mae.csv"))?;
                for (slot, curve) in curves {
                    let first = default_nodes(slot, &fp.grid).start;
                    for (i, mae) in curve.into_iter().enumerate() {
                        w.serialize(EmbedMaeRow {
                            slot: slot.name(),
                            time_index: first + i,
                            t: fp.grid.time(first + i),
                            mae,
                            seed: cfg.seed,
                        })?;
                    }
                }
                w.flush()?;
            }
        }
        summaries.push(StageSummary {
            record: r.clone(),
            flocking: diag,
        });
        Ok(())
    })?;
    Ok(RunOutcome::Fictitious {
        stages: summaries,
        fields: outcome.fields,
        embeds: outcome.embeds,
    })
}

pub fn flocking_diagnostics(p: &Flocking, block: &DriverBlock, sim: &SimOutput) -> Result<FlockingDiagnostics> {
    Ok(FlockingDiagnostics {
        y2_error: if p.beta == 0.0 { Some(p.y2_error(block, sim)?) } else { None },
        z0_velocity: p.z0_velocity_magnitude(sim),
        mean_velocity_error: p.mean_velocity_error(block, sim)?,
        terminal_spread: p.terminal_velocity_spread(sim),
    })
}

/// Per-node MAE of every learned embedding against the empirical law of
/// `n1` particles per common path, simulated with the given networks.
#[allow(clippy::too_many_arguments)]
pub fn reference_embed_mae(
    problem: &dyn FbsdeProblem,
    fields: &DecouplingFields,
    embeds: &EmbedSet,
    grid: TimeGrid,
    features: FeatureSpec,
    seed: u64,
    key: u64,
    n1: usize,
    n2: usize,
) -> Result<Vec<(Slot, Vec<f64>)>> {
    let (block, feats) = draw_block(problem, grid, n1, n2, features, seed, key)?;
    let sim = simulate(problem, FieldModel::Nets(fields), embeds, &block, &feats, 0)?;
    let ens = sim.ensemble()?;
    let mut out = Vec::new();
    for slot in Slot::ALL {
        let Some(arch) = embeds.arch(slot) else { continue };
        let data = compute_targets(problem, slot, &ens, &feats, &grid, default_nodes(slot, &grid))?;
        let per_node = n1 * n2;
        let mut curve = Vec::with_capacity(data.len() / per_node);
        for node in 0..data.len() / per_node {
            let mut total = 0.0;
            for s in node * per_node..(node + 1) * per_node {
                let pred = arch.predict_row(data.time[s], data.state_row(s), data.feat_row(s))?;
                total += pred.iter().zip(data.target_row(s)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            }
            curve.push(total / per_node as f64);
        }
        out.push((slot, curve));
    }
    Ok(out)
}

#[derive(Serialize)]
struct EmbedMaeRow {
    slot: &'static str,
    time_index: usize,
    t: f64,
    mae: f64,
    seed: u64,
}

fn write_curves(
    w: &mut csv::Writer<fs::File>,
    stage: usize,
    block: &DriverBlock,
    sim: &SimOutput,
    refs: &[Vec<Vec<f64>>; 4],
) -> Result<()> {
    let d = sim.dims;
    let x = mee_curve(&sim.x, &refs[0], d.dx)?;
    let y = mee_curve(&sim.y, &refs[1], d.dy)?;
    let z = mee_curve(&sim.z, &refs[2], d.dz())?;
    let z0 = mee_curve(&sim.z0, &refs[3], d.dz())?;
    for i in 0..x.len() {
        w.serialize(CurveRow {
            stage,
            time_index: i,
            t: block.grid().time(i),
            x: x[i],
            y: y[i],
            z: z.get(i).copied(),
            z0: z0.get(i).copied(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_trajectories(
    path: &Path,
    block: &DriverBlock,
    sim: &SimOutput,
    refs: Option<&[Vec<Vec<f64>>; 4]>,
    rows: usize,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let d = sim.dims;
    let series: [(&str, &Vec<Vec<f64>>, usize); 2] = [("x", &sim.x, d.dx), ("y", &sim.y, d.dy)];
    for (k, (name, values, width)) in series.into_iter().enumerate() {
        for row in 0..rows.min(sim.batch()) {
            for (node, v) in values.iter().enumerate() {
                for c in 0..width {
                    let at = row * width + c;
                    w.serialize(TrajectoryRow {
                        row,
                        time_index: node,
                        t: block.grid().time(node),
                        process: name,
                        component: c,
                        learned: v[at],
                        reference: refs.map(|r| r[k][node][at]),
                    })?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

const DENSITY_BINS: usize = 20;

/// Histogram of each terminal velocity coordinate, per common path.
fn write_density(path: &Path, d: usize, sim: &SimOutput) -> Result<()> {
    let mut w = csv_writer(path)?;
    let last = sim.x.last().expect("terminal node");
    for (j2, cloud) in last.chunks(sim.n1 * 2 * d).enumerate() {
        for k in 0..d {
            let vals: Vec<f64> = cloud.chunks(2 * d).map(|s| s[d + k]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = ((hi - lo) / DENSITY_BINS as f64).max(1e-12);
            let mut counts = [0usize; DENSITY_BINS];
            for v in &vals {
                let b = (((v - lo) / width) as usize).min(DENSITY_BINS - 1);
                counts[b] += 1;
            }
            for (b, c) in counts.iter().enumerate() {
                w.serialize(DensityRow {
                    common_path: j2,
                    coordinate: k,
                    bin_low: lo + b as f64 * width,
                    bin_high: lo + (b + 1) as f64 * width,
                    density: *c as f64 / (vals.len() as f64 * width),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
