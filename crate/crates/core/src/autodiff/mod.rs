//! Dense reverse-mode automatic differentiation.
//!
//! Values are row-major `f64` tensors of rank 0 to 2. Rank-1 tensors behave as
//! single-row matrices wherever a matrix is expected. Operations are recorded
//! on a [`Tape`] and differentiated in exact reverse recording order.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Binding, Param, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
