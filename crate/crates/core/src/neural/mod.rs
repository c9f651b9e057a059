//! Hand-written differentiable blocks.
//!
//! Every block keeps its weights in a shared [`ParameterSet`] and addresses
//! them through [`ParamId`] handles. A forward pass returns its output plus a
//! cache; the matching backward pass takes the upstream gradient and the cache,
//! accumulates parameter gradients into a [`Gradients`] buffer and returns the
//! gradient with respect to its inputs. There is no tape: composite models
//! call the backward passes in reverse order themselves.

mod attention;
mod embedding;
pub mod gradcheck;
mod linear;
mod lstm;
pub mod ops;
mod optim;
mod params;

pub use attention::{AdditiveAttention, AttendCache};
pub use embedding::Embedding;
pub use gradcheck::{grad_check, GradCheckReport};
pub use linear::Linear;
pub use lstm::{BiLstm, BiLstmCache, BiLstmOutput, LstmCell, SeqCache, StepCache};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Gradients, Init, ParamId, ParameterSet, Tensor};

/// Scalar type of all network math.
#[cfg(not(feature = "fast-f32"))]
pub type Real = f64;
/// Scalar type of all network math.
#[cfg(feature = "fast-f32")]
pub type Real = f32;

/// Tolerance for exact-arithmetic assertions in tests at the active precision.
#[cfg(test)]
pub(crate) const TEST_TOL: Real = if cfg!(feature = "fast-f32") {
    1e-5
} else {
    1e-12
};
