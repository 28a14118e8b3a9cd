//! Simulation of the conditional FBSDE under frozen networks, deep-BSDE
//! training of the decoupling fields, and the fictitious-play loop.

pub mod bsde;
pub mod fields;
pub mod fp;
pub mod problem;
pub mod simulate;
pub mod supervised;

pub use bsde::{draw_block, epoch_key, train_bsde, BlockRole, BsdeTrainConfig};
pub use fields::{DecouplingFields, EmbedSet, EmbedShape, EmbedSource, FieldModel, FieldOracle, FieldsAdam, ZeroFields};
pub use fp::{fictitious_play, FpConfig, FpOutcome, Mee, StageEvaluator, StageRecord, StageView};
pub use problem::{Dims, FbsdeProblem, NodeState, Particle, Slot};
pub use simulate::{bsde_loss, simulate, SimOutput};
pub use supervised::{fit_embedding, SupervisedConfig, SupervisedOutcome};
