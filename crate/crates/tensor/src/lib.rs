//! Dense tensors with a recording tape for reverse-mode differentiation.
//!
//! Values are stored row-major in a [`Tensor`]. Every differentiable op is a
//! method on [`Tape`], which records the op and its cached intermediates so
//! that [`Tape::backward`] can replay them in reverse. Trainable weights live
//! in a [`ParamStore`] and are updated by [`Sgd`].
//!
//! All code is generic over [`Real`] so the same graphs can be evaluated in
//! 64-bit precision for finite-difference checks ([`gradient_check`]).

mod check;
mod checkpoint;
mod error;
mod param;
mod real;
mod sgd;
mod tape;
mod tensor;

pub use check::{gradient_check, GradCheck, GradCheckReport};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use error::{Result, TensorError};
pub use param::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use sgd::Sgd;
pub use tape::{bce_value, Activation, Combine, Gradients, Tape, Var, BCE_EPSILON};
pub use tensor::Tensor;
