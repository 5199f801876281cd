//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Operations are methods on [`Graph`]; each returns a [`Var`] holding the
//! forward value. A recording graph keeps every differentiable step on its
//! tape and [`Graph::backward`] replays the tape in reverse, summing
//! gradients into leaves created with [`Graph::param`].

mod adam;
mod gradcheck;
mod graph;
mod ops;
mod real;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradcheck, gradcheck_inputs, GradcheckReport, FD_STEP};
pub use graph::{Graph, Var};
pub use ops::gelu_scalar;
pub use real::Real;
pub use tensor::Tensor;
