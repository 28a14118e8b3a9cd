//! Fictitious play for mean-field games with common noise, with the
//! conditional law entering through signature-based measure embeddings.
//!
//! The pieces are layered: [`nnkit`] (tape, networks, Adam), [`sigkit`]
//! (truncated signatures), [`pathsim`] (seeded drivers and ensembles),
//! [`embed`] (Step-2 regression), [`solver`] (simulation, deep BSDE and the
//! outer loop), [`benchmarks`], [`metrics`] and [`run`] (configuration and
//! artifacts).

pub mod benchmarks;
pub mod embed;
pub mod error;
pub mod metrics;
pub mod nnkit;
pub mod pathsim;
pub mod run;
pub mod sigkit;
pub mod solver;

pub use error::{Error, Result};
