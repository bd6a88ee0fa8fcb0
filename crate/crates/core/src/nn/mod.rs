//! Minimal dense-network substrate: affine layers with a rectifier
//! nonlinearity, exact reverse-mode gradients, an adaptive-moment optimizer,
//! warmup/cosine learning-rate schedules, and a bit-exact checkpoint
//! container.
//!
//! Everything runs in `f64` on the CPU. There is no autodiff graph: the layer
//! vocabulary is fixed (affine + rectifier/identity), so forward traces and
//! backward passes are written out by hand.

mod adam;
mod checkpoint;
mod dense;
mod schedule;

pub use adam::{adam_step, clip_by_global_norm, OptimizerState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use dense::{
    backward, forward, gradients, input_gradient, Activation, DenseNetwork, Gradients, Layer,
};
pub use schedule::{lr_at, LrSchedule};
