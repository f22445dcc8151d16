//! Define-by-run reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse and returns [`Gradients`] for all tracked leaves.
//! Tensors use NCHW layout wherever a spatial operator is involved.
//!
//! ```
//! use picrnn_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let theta = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
//! let sq = tape.mul(theta, theta).unwrap();
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(theta).unwrap().data(), &[2.0, 4.0]);
//! ```

mod conv;
mod error;
pub mod gradcheck;
mod init;
mod optim;
mod tape;
mod tensor;

pub use conv::{conv2d_output_size, pixel_shuffle_values, pixel_unshuffle_values};
pub use error::{Error, Result};
pub use init::{kaiming_normal, kaiming_normal_seeded};
pub use optim::{AdamConfig, AdamState};
pub use tape::{Gradients, LinearOperator, Tape, Var};
pub use tensor::Tensor;
