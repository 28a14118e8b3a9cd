//! Seeded Brownian drivers, signature features of the common noise, and
//! conditional particle ensembles.

pub mod drivers;
pub mod ensemble;
pub mod grid;
pub mod rng;

pub use drivers::{generate_drivers, DriverBlock, DriverSpec, FeatureTable, InitialSampler};
pub use ensemble::{Cloud, CondEnsemble};
pub use grid::TimeGrid;
pub use rng::{stream, Purpose, StreamRng};
