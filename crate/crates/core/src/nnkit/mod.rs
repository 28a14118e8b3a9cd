//! Dense tensors, a small reverse-mode tape, feedforward networks, Adam and
//! learning-rate schedules.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod schedule;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use mlp::{mlp_forward, Activation, BoundNet, Layer, NetGrads, NetParams};
pub use schedule::{Decay, LrSchedule};
pub use tape::{Gradients, Tape, Var};
pub use tensor::DenseTensor;
