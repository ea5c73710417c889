//! Dense and compressed-row sparse matrices with the handful of kernels the
//! encoder, decoder and optimiser need. Everything is `f64`.

mod dense;
mod sparse;

pub(crate) use dense::dot;
pub use dense::{relu, sigmoid, softplus, Axis, DenseMatrix, ElementwiseOp, ReduceOp, UnaryFn};
pub use sparse::SparseMatrix;
