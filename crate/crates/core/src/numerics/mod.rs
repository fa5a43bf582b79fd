//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use tape::{matmul_raw, Tape, Var};
pub use tensor::{log_add_exp, log_sum_exp, Tensor};
