//! Run configuration, named presets and artifact emission.

pub mod config;
pub mod execute;
pub mod presets;

pub use config::{
    BenchmarkName, EmbeddingSection, FictitiousSection, FieldError, FieldsSection, FlockingSection, LayerSpec, RunConfig,
    SupervisedSection,
};
pub use execute::{flocking_diagnostics, reference_embed_mae, run, FlockingDiagnostics, RunOutcome, RunReport, StageSummary};
pub use presets::{preset, PRESETS};
