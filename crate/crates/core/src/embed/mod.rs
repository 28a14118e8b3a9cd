//! Learning the measure embeddings from empirical conditional laws.

pub mod arch;
pub mod eval;
pub mod targets;
pub mod train;

pub use arch::{EmbedArch, EmbedVariant};
pub use eval::{mae_at_time, time_average, EvalSet};
pub use targets::{compute_targets, default_nodes, EmbedTarget};
pub use train::{embed_loss, train_embed, train_embed_from, EmbedTrainConfig};
