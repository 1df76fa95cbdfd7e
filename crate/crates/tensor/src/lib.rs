//! Reverse-mode automatic differentiation over dense N-dimensional arrays,
//! sized for training small convolutional invertible networks on a CPU.
//!
//! Values live in [`Array`]; [`Tensor`] wraps an array with the history needed
//! by [`Tensor::backward`]. All kernels are single-threaded and deterministic.

pub mod array;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod real;
pub mod separable;
mod tensor;

pub use array::Array;
pub use conv::{conv2d, conv2d_multi, ConvSpec};
pub use error::{Result, TensorError};
pub use ops::{concat_channels, BinaryKind, UnaryKind, DEFAULT_LEAKY_SLOPE};
pub use real::Real;
pub use separable::{resample, AxisMap};
pub use tensor::Tensor;

/// `op(a, b)` for binary kinds, `op(a)` for unary ones.
pub fn elementwise<T: Real>(op: ElementwiseOp, a: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    match (op, b) {
        (ElementwiseOp::Unary(kind), None) => Ok(a.unary(kind)),
        (ElementwiseOp::Binary(kind), Some(b)) => a.binary(kind, b),
        (ElementwiseOp::Unary(_), Some(_)) => Err(TensorError::InvalidArgument {
            op: "elementwise",
            reason: "unary operation given two operands".into(),
        }),
        (ElementwiseOp::Binary(_), None) => Err(TensorError::InvalidArgument {
            op: "elementwise",
            reason: "binary operation given one operand".into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementwiseOp {
    Unary(UnaryKind),
    Binary(BinaryKind),
}
