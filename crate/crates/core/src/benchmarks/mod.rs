//! The three experiments as [`FbsdeProblem`](crate::solver::FbsdeProblem)
//! instances, with closed-form oracles where they exist.

pub mod analytic;
pub mod flocking;
pub mod kernel;

pub use analytic::{AnalyticMvFbsde, AnalyticPoint};
pub use flocking::{riccati_eta, second_half, Flocking, Mat};
pub use kernel::{GaussianKernel, GeometricNoise};
