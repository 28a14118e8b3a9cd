use std::path::PathBuf;

use super::config::{
    BenchmarkName, EmbeddingSection, FictitiousSection, FieldsSection, FlockingSection, LayerSpec, RunConfig,
    SupervisedSection,
};
use crate::embed::{EmbedTrainConfig, EmbedVariant};
use crate::error::{Error, Result};
use crate::nnkit::{Activation, Decay, LrSchedule};
use crate::pathsim::TimeGrid;
use crate::sigkit::{FeatureKind, FeatureSpec};
use crate::solver::BsdeTrainConfig;

pub const PRESETS: [&str; 6] = ["paper-5.1", "paper-5.2", "paper-5.3", "desk-5.1", "desk-5.2", "desk-5.3"];

const LOGSIG2: FeatureSpec = FeatureSpec {
    kind: FeatureKind::Logsig,
    depth: 2,
};

fn grid(n_steps: usize) -> TimeGrid {
    TimeGrid {
        horizon: 1.0,
        n_steps,
        fine_factor: 4,
    }
}

fn tanh_layers(width: usize, depth: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::tanh(width); depth]
}

fn silu_tanh(width: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec {
            width,
            activation: Activation::Silu,
        },
        LayerSpec::tanh(width),
    ]
}

fn every_until(rate: f64, factor: f64, every: usize, until: usize) -> LrSchedule {
    LrSchedule {
        initial_rate: rate,
        decay: Decay::Every {
            factor,
            every,
            until: Some(until),
        },
        stage_factor: 1.0,
        stage_start: 1,
    }
}

fn milestones(rate: f64, factor: f64, at: Vec<usize>) -> LrSchedule {
    LrSchedule {
        initial_rate: rate,
        decay: Decay::Milestones { factor, at },
        stage_factor: 1.0,
        stage_start: 1,
    }
}

fn base(benchmark: BenchmarkName, name: &str, d: usize, n_steps: usize, embedding: EmbeddingSection) -> RunConfig {
    RunConfig {
        benchmark,
        run_id: Some(name.to_string()),
        seed: 1,
        threads: 1,
        output_dir: PathBuf::from("runs"),
        d,
        q: d,
        grid: grid(n_steps),
        signature: LOGSIG2,
        embedding,
        fields: None,
        supervised: None,
        fictitious_play: None,
        flocking: None,
    }
}

fn direct(layers: Vec<LayerSpec>) -> EmbeddingSection {
    EmbeddingSection {
        variant: EmbedVariant::DirectNet,
        layers,
    }
}

/// Named configurations. `paper-*` carry the published hyperparameters;
/// `desk-*` are reduced budgets that finish in minutes on one core.
pub fn preset(name: &str) -> Result<RunConfig> {
    let cfg = match name {
        "paper-5.1" => RunConfig {
            supervised: Some(SupervisedSection {
                n1: 128,
                n2: 64,
                epochs: 300,
                steps_per_epoch: 50,
                batch_size: 512,
                schedule: every_until(3e-3, 0.95, 100, 5000),
                eval_rows: 1000,
            }),
            ..base(BenchmarkName::GaussianKernel, name, 5, 120, direct(tanh_layers(64, 2)))
        },
        "desk-5.1" => RunConfig {
            supervised: Some(SupervisedSection {
                n1: 64,
                n2: 32,
                epochs: 50,
                steps_per_epoch: 50,
                batch_size: 256,
                schedule: every_until(3e-3, 0.95, 100, 2500),
                eval_rows: 1000,
            }),
            ..base(BenchmarkName::GaussianKernel, name, 1, 120, direct(tanh_layers(32, 2)))
        },
        "paper-5.2" => RunConfig {
            fields: Some(FieldsSection {
                u_layers: tanh_layers(64, 2),
                z_layers: tanh_layers(128, 4),
            }),
            fictitious_play: Some(FictitiousSection {
                stages: 30,
                n1: 256,
                n2: 128,
                eval_n1: 64,
                eval_n2: 64,
                embed: EmbedTrainConfig {
                    steps: 5000,
                    batch_size: 1024,
                    schedule: LrSchedule::every(1.2e-4, 0.8, 500).with_stage_factor(0.95, 1),
                },
                bsde: BsdeTrainConfig {
                    steps: 2000,
                    n1: 32,
                    n2: 16,
                    regen_every: 20,
                    schedule: milestones(2.5e-4, 0.3, vec![1000, 1500]).with_stage_factor(0.9, 20),
                },
                trajectory_rows: 4,
            }),
            ..base(BenchmarkName::AnalyticMvfbsde, name, 1, 120, direct(tanh_layers(64, 2)))
        },
        "desk-5.2" => RunConfig {
            fields: Some(FieldsSection {
                u_layers: tanh_layers(32, 2),
                z_layers: tanh_layers(32, 2),
            }),
            fictitious_play: Some(FictitiousSection {
                stages: 10,
                n1: 64,
                n2: 16,
                eval_n1: 32,
                eval_n2: 16,
                embed: EmbedTrainConfig {
                    steps: 200,
                    batch_size: 256,
                    schedule: LrSchedule::every(3e-3, 0.8, 100).with_stage_factor(0.95, 1),
                },
                bsde: BsdeTrainConfig {
                    steps: 150,
                    n1: 8,
                    n2: 8,
                    regen_every: 10,
                    schedule: LrSchedule::every(3e-3, 0.5, 100),
                },
                trajectory_rows: 4,
            }),
            ..base(BenchmarkName::AnalyticMvfbsde, name, 1, 40, direct(tanh_layers(32, 2)))
        },
        "paper-5.3" => RunConfig {
            fields: Some(FieldsSection {
                u_layers: silu_tanh(64),
                z_layers: tanh_layers(128, 4),
            }),
            fictitious_play: Some(FictitiousSection {
                stages: 20,
                n1: 512,
                n2: 128,
                eval_n1: 512,
                eval_n2: 8,
                embed: EmbedTrainConfig {
                    steps: 5000,
                    batch_size: 1024,
                    schedule: LrSchedule::every(2.5e-4, 0.8, 1000),
                },
                bsde: BsdeTrainConfig {
                    steps: 3000,
                    n1: 32,
                    n2: 16,
                    regen_every: 30,
                    schedule: LrSchedule::every(7.5e-5, 0.3, 1000),
                },
                trajectory_rows: 4,
            }),
            flocking: Some(FlockingSection {
                beta: 0.0,
                c: 0.1,
                dd: 0.3,
                r: 0.5,
                q: 0.5,
                reference_n1: 4096,
            }),
            ..base(BenchmarkName::Flocking, name, 3, 120, direct(silu_tanh(64)))
        },
        "desk-5.3" => RunConfig {
            fields: Some(FieldsSection {
                u_layers: tanh_layers(32, 2),
                z_layers: tanh_layers(32, 2),
            }),
            fictitious_play: Some(FictitiousSection {
                stages: 10,
                n1: 64,
                n2: 32,
                eval_n1: 64,
                eval_n2: 4,
                embed: EmbedTrainConfig {
                    steps: 200,
                    batch_size: 256,
                    schedule: LrSchedule::every(3e-3, 0.5, 100).with_stage_factor(0.8, 2),
                },
                bsde: BsdeTrainConfig {
                    steps: 300,
                    n1: 8,
                    n2: 8,
                    regen_every: 10,
                    schedule: milestones(3e-3, 0.3, vec![150, 250]).with_stage_factor(0.9, 2),
                },
                trajectory_rows: 4,
            }),
            flocking: Some(FlockingSection {
                beta: 0.0,
                c: 0.1,
                dd: 0.3,
                r: 0.5,
                q: 0.5,
                reference_n1: 4096,
            }),
            ..base(BenchmarkName::Flocking, name, 3, 20, direct(silu_tanh(32)))
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
