use serde::{Deserialize, Serialize};

/// How the rate decays within one training call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decay {
    Constant,
    /// Multiply by `factor` every `every` steps, stopping after step `until` if set.
    Every {
        factor: f64,
        every: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        until: Option<usize>,
    },
    /// Multiply by `factor` once at each listed step.
    Milestones { factor: f64, at: Vec<usize> },
}

/// Stepwise learning-rate schedule with an extra per-stage factor.
///
/// `rate(stage, step) = initial_rate * stage_factor^max(0, stage - stage_start) * decay(step)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_rate: f64,
    pub decay: Decay,
    #[serde(default = "one")]
    pub stage_factor: f64,
    #[serde(default = "one_usize")]
    pub stage_start: usize,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl LrSchedule {
    pub fn constant(rate: f64) -> Self {
        Self {
            initial_rate: rate,
            decay: Decay::Constant,
            stage_factor: 1.0,
            stage_start: 1,
        }
    }

    pub fn every(rate: f64, factor: f64, every: usize) -> Self {
        Self {
            initial_rate: rate,
            decay: Decay::Every {
                factor,
                every,
                until: None,
            },
            stage_factor: 1.0,
            stage_start: 1,
        }
    }

    pub fn with_stage_factor(mut self, factor: f64, start: usize) -> Self {
        self.stage_factor = factor;
        self.stage_start = start;
        self
    }

    pub fn rate(&self, stage: usize, step: usize) -> f64 {
        let stage_exp = stage.saturating_sub(self.stage_start) as i32;
        let decay = match &self.decay {
            Decay::Constant => 1.0,
            Decay::Every { factor, every, until } => {
                let s = until.map_or(step, |u| step.min(u));
                factor.powi((s / (*every).max(1)) as i32)
            }
            Decay::Milestones { factor, at } => factor.powi(at.iter().filter(|&&m| step >= m).count() as i32),
        };
        self.initial_rate * self.stage_factor.powi(stage_exp) * decay
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.initial_rate.is_finite() || self.initial_rate <= 0.0 {
            return Err("initial_rate must be positive".into());
        }
        if !(self.stage_factor > 0.0 && self.stage_factor <= 1.0) {
            return Err("stage_factor must lie in (0, 1]".into());
        }
        match &self.decay {
            Decay::Constant => Ok(()),
            Decay::Every { factor, every, .. } => {
                if !(*factor > 0.0 && *factor <= 1.0) {
                    Err("decay.factor must lie in (0, 1]".into())
                } else if *every == 0 {
                    Err("decay.every must be positive".into())
                } else {
                    Ok(())
                }
            }
            Decay::Milestones { factor, .. } => {
                if *factor > 0.0 && *factor <= 1.0 {
                    Ok(())
                } else {
                    Err("decay.factor must lie in (0, 1]".into())
                }
            }
        }
    }
}
