use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform coarse grid `t_i = i T / N_T` with a finer grid of
/// `fine_factor * N_T` steps on which the common noise is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
    pub fine_factor: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize, fine_factor: usize) -> Result<Self> {
        let g = Self {
            horizon,
            n_steps,
            fine_factor,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return Err(Error::config("grid.horizon must be positive"));
        }
        if self.n_steps == 0 {
            return Err(Error::config("grid.n_steps must be positive"));
        }
        if self.fine_factor == 0 {
            return Err(Error::config("grid.fine_factor must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn fine_steps(&self) -> usize {
        self.n_steps * self.fine_factor
    }

    pub fn fine_dt(&self) -> f64 {
        self.horizon / self.fine_steps() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n_steps as f64
    }

    pub fn fine_time(&self, j: usize) -> f64 {
        self.horizon * j as f64 / self.fine_steps() as f64
    }

    /// The `N_T + 1` coarse nodes.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }
}
