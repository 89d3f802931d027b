//! Dense numeric kernel: matrices, activations, normalisation, initialisation and
//! reverse-mode differentiation.

mod gradcheck;
mod matrix;
pub mod ops;
mod tape;

pub use gradcheck::{check_gradient, FD_STEP, RELATIVE_FLOOR};
pub use matrix::Matrix;
pub use ops::{dropout, gelu, layernorm, softmax, truncated_normal_init};
pub use tape::{Gradients, Tape, Var};

/// Elementwise product of two equally shaped matrices.
pub fn hadamard(a: &Matrix, b: &Matrix) -> crate::Result<Matrix> {
    a.hadamard(b)
}

/// Matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> crate::Result<Matrix> {
    a.matmul(b)
}
