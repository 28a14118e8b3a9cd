use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbedTrainConfig, EmbedVariant};
use crate::error::{Error, Result};
use crate::nnkit::{Activation, LrSchedule};
use crate::pathsim::TimeGrid;
use crate::sigkit::FeatureSpec;
use crate::solver::BsdeTrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkName {
    GaussianKernel,
    AnalyticMvfbsde,
    Flocking,
}

impl BenchmarkName {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkName::GaussianKernel => "gaussian-kernel",
            BenchmarkName::AnalyticMvfbsde => "analytic-mvfbsde",
            BenchmarkName::Flocking => "flocking",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn tanh(width: usize) -> Self {
        Self {
            width,
            activation: Activation::Tanh,
        }
    }
}

pub(crate) fn hidden(layers: &[LayerSpec]) -> Vec<(usize, Activation)> {
    layers.iter().map(|l| (l.width, l.activation)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    pub variant: EmbedVariant,
    pub layers: Vec<LayerSpec>,
}

/// Networks for `Y0 = u(X0)` and for `Z`, `Z0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSection {
    pub u_layers: Vec<LayerSpec>,
    pub z_layers: Vec<LayerSpec>,
}

/// Standalone embedding fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedSection {
    pub n1: usize,
    pub n2: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Held-out trajectories for the MAE curve.
    pub eval_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FictitiousSection {
    pub stages: usize,
    pub n1: usize,
    pub n2: usize,
    pub eval_n1: usize,
    pub eval_n2: usize,
    pub embed: EmbedTrainConfig,
    pub bsde: BsdeTrainConfig,
    /// Evaluation rows dumped to `trajectories.csv` after the last stage.
    #[serde(default = "default_trajectories")]
    pub trajectory_rows: usize,
}

fn default_trajectories() -> usize {
    4
}

/// `R = r I`, `Q = q I`, `C = c I`, `D = dd I`, `E[v0] = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlockingSection {
    pub beta: f64,
    pub c: f64,
    pub dd: f64,
    #[serde(default = "half")]
    pub r: f64,
    #[serde(default = "half")]
    pub q: f64,
    /// Particles per common path of the empirical law the learned embedding
    /// is scored against after the last stage.
    #[serde(default = "reference_n1")]
    pub reference_n1: usize,
}

fn half() -> f64 {
    0.5
}

pub(crate) fn reference_n1() -> usize {
    4096
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// Everything a run depends on. Together with `seed` it determines every
/// metric the run writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: BenchmarkName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub d: usize,
    pub q: usize,
    pub grid: TimeGrid,
    pub signature: FeatureSpec,
    pub embedding: EmbeddingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervised: Option<SupervisedSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fictitious_play: Option<FictitiousSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flocking: Option<FlockingSection>,
}

/// A failed check, named by its dotted field path.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl RunConfig {
    /// Parse and validate TOML. Errors carry the line of the offending field
    /// when it can be located.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1));
            match line {
                Some(l) => Error::Config(format!("line {l}: {}", e.message())),
                None => Error::Config(e.message().to_string()),
            }
        })?;
        if let Some(err) = cfg.check().into_iter().next() {
            let at = locate(text, &err.path).map(|l| format!("line {l}: ")).unwrap_or_default();
            return Err(Error::Config(format!("{at}{}: {}", err.path, err.message)));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialisation: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        match self.check().into_iter().next() {
            Some(e) => Err(Error::Config(format!("{}: {}", e.path, e.message))),
            None => Ok(()),
        }
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}-seed{}", self.benchmark.as_str(), self.seed))
    }

    /// Every violated constraint, in field order.
    pub fn check(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, path: &str, message: &str| {
            if !ok {
                errs.push(FieldError {
                    path: path.into(),
                    message: message.into(),
                });
            }
        };
        need(self.threads >= 1, "threads", "must be at least 1");
        if let Some(id) = &self.run_id {
            let clean = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            need(clean, "run_id", "must be non-empty and use only [A-Za-z0-9._-]");
        }
        need(self.d >= 1, "d", "must be positive");
        need(self.q == self.d, "q", "every benchmark uses q = d");
        need(self.grid.horizon.is_finite() && self.grid.horizon > 0.0, "grid.horizon", "must be positive");
        need(self.grid.n_steps >= 1, "grid.n_steps", "must be positive");
        need(self.grid.fine_factor >= 1, "grid.fine_factor", "must be positive");
        need(self.signature.depth >= 1, "signature.depth", "must be at least 1");
        need(self.signature.depth <= 6, "signature.depth", "depths above 6 are not supported");
        layers_ok(&self.embedding.layers, "embedding.layers", &mut need);

        let fp_bench = self.benchmark != BenchmarkName::GaussianKernel;
        need(
            self.supervised.is_some() != fp_bench,
            "supervised",
            if fp_bench {
                "only the gaussian-kernel benchmark takes a [supervised] section"
            } else {
                "the gaussian-kernel benchmark needs a [supervised] section"
            },
        );
        need(
            self.fictitious_play.is_some() == fp_bench,
            "fictitious_play",
            if fp_bench {
                "this benchmark needs a [fictitious_play] section"
            } else {
                "the gaussian-kernel benchmark does not run fictitious play"
            },
        );
        need(self.fields.is_some() == fp_bench, "fields", "required exactly when fictitious play runs");
        need(
            self.flocking.is_some() == (self.benchmark == BenchmarkName::Flocking),
            "flocking",
            "required exactly for the flocking benchmark",
        );
        if let Some(f) = &self.fields {
            layers_ok(&f.u_layers, "fields.u_layers", &mut need);
            layers_ok(&f.z_layers, "fields.z_layers", &mut need);
        }
        if let Some(s) = &self.supervised {
            need(s.n1 >= 1, "supervised.n1", "must be positive");
            need(s.n2 >= 1, "supervised.n2", "must be positive");
            need(s.epochs >= 1, "supervised.epochs", "must be positive");
            need(s.steps_per_epoch >= 1, "supervised.steps_per_epoch", "must be positive");
            need(s.batch_size >= 1, "supervised.batch_size", "must be positive");
            need(s.eval_rows >= 1, "supervised.eval_rows", "must be positive");
            if let Err(m) = s.schedule.validate() {
                need(false, "supervised.schedule", &m);
            }
        }
        if let Some(f) = &self.fictitious_play {
            need(f.stages >= 1, "fictitious_play.stages", "must be positive");
            need(f.n1 >= 1, "fictitious_play.n1", "must be positive");
            need(f.n2 >= 1, "fictitious_play.n2", "must be positive");
            need(f.eval_n1 >= 1, "fictitious_play.eval_n1", "must be positive");
            need(f.eval_n2 >= 1, "fictitious_play.eval_n2", "must be positive");
            need(f.embed.batch_size >= 1, "fictitious_play.embed.batch_size", "must be positive");
            need(f.bsde.n1 >= 1, "fictitious_play.bsde.n1", "must be positive");
            need(f.bsde.n2 >= 1, "fictitious_play.bsde.n2", "must be positive");
            need(f.bsde.regen_every >= 1, "fictitious_play.bsde.regen_every", "must be positive");
            if let Err(m) = f.embed.schedule.validate() {
                need(false, "fictitious_play.embed.schedule", &m);
            }
            if let Err(m) = f.bsde.schedule.validate() {
                need(false, "fictitious_play.bsde.schedule", &m);
            }
        }
        if let Some(f) = &self.flocking {
            need(f.beta.is_finite() && f.beta >= 0.0, "flocking.beta", "must be finite and non-negative");
            need(f.r.is_finite() && f.r > 0.0, "flocking.r", "must be positive");
            need(f.q.is_finite() && f.q > 0.0, "flocking.q", "must be positive");
            need(f.c.is_finite(), "flocking.c", "must be finite");
            need(f.dd.is_finite(), "flocking.dd", "must be finite");
            need(f.reference_n1 >= 2, "flocking.reference_n1", "must be at least 2");
        }
        errs
    }
}

fn layers_ok(layers: &[LayerSpec], path: &str, need: &mut impl FnMut(bool, &str, &str)) {
    need(!layers.is_empty(), path, "needs at least one hidden layer");
    need(layers.iter().all(|l| l.width >= 1), path, "layer widths must be positive");
}

/// Line (1-based) of the key named by a dotted path, following `[table]`
/// headers. Falls back to the table header or `None`.
fn locate(text: &str, path: &str) -> Option<usize> {
    let (table, key) = match path.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", path),
    };
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == path || current == table {
                header = header.or(Some(i + 1));
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        let full = if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
        if full == path || (current == table && k == key) {
            return Some(i + 1);
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_follows_tables() {
        let text = "seed = 1\n[grid]\nhorizon = 1.0\nn_steps = 0\n";
        assert_eq!(locate(text, "grid.n_steps"), Some(4));
        assert_eq!(locate(text, "seed"), Some(1));
        assert_eq!(locate(text, "grid.missing"), Some(2));
        assert_eq!(locate(text, "other"), None);
    }
}
