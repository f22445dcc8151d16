//! Control-aware convolutional-recurrent surrogate for single-phase
//! reservoir pressure, trained without labels on the backward-Euler
//! state-space residual.
//!
//! The network maps `(x_{k−1}, u_{k−1}, h_{k−1}, c_{k−1})` to
//! `(x_k, h_k, c_k)`: a strided convolutional encoder for the pressure map,
//! a pixel-unshuffle encoder for the well controls, a ConvLSTM cell that
//! mixes both, and an upsampling decoder whose output is added to the
//! previous pressure.

pub mod arch;
pub mod checkpoint;
mod error;
pub mod loss;
pub mod network;
pub mod train;

pub use arch::{Arch, ParamStore, Role};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use error::{Error, Result};
pub use loss::{PhysicsLoss, Scaling};
pub use network::{Bound, HiddenState, Normalizer, Surrogate, TapeRollout, WellSlot};
pub use train::{extrapolate, lr_schedule, train, EpochLoss, LossRecord, TrainConfig};
